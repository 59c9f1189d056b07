//! Exhaustive Gini split search in exact rational arithmetic.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use happimeter_core::forest::{best_split, Dataset, Split};

#[derive(Debug, Clone, Copy)]
struct Frac {
    num: i128,
    den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Frac {
    fn new(num: i128, den: i128) -> Frac {
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Frac { num: s * num / g, den: s * den / g }
    }
    fn sub(self, o: Frac) -> Frac {
        Frac::new(self.num * o.den - o.num * self.den, self.den * o.den)
    }
    fn mul(self, o: Frac) -> Frac {
        Frac::new(self.num * o.num, self.den * o.den)
    }
    fn gt(self, o: Frac) -> bool {
        self.num * o.den > o.num * self.den
    }
    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gini(counts: &[i128]) -> Frac {
    let m: i128 = counts.iter().sum();
    counts.iter().fold(Frac::new(1, 1), |g, &c| g.sub(Frac::new(c * c, m * m)))
}

pub struct Instance {
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    n_classes: usize,
    candidates: Vec<usize>,
    min_leaf: usize,
}

/// (feature, threshold, exact decrease) of the best positive-gain split.
/// Ties keep the first found: lowest feature, then lowest threshold.
fn brute_force(inst: &Instance) -> Option<(usize, f64, Frac)> {
    let n = inst.rows.len() as i128;
    let counts = |rows: &[usize]| {
        let mut c = vec![0i128; inst.n_classes];
        for &i in rows {
            c[inst.labels[i] as usize] += 1;
        }
        c
    };
    let all: Vec<usize> = (0..inst.rows.len()).collect();
    let parent = gini(&counts(&all));
    let mut feats = inst.candidates.clone();
    feats.sort();
    feats.dedup();
    let mut best: Option<(usize, f64, Frac)> = None;
    for &f in &feats {
        let mut vals: Vec<f64> = inst.rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let mid = (w[0] + w[1]) / 2.0;
            let t = if mid < w[1] { mid } else { w[0] };
            let (left, right): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| inst.rows[i][f] <= t);
            if left.len() < inst.min_leaf || right.len() < inst.min_leaf {
                continue;
            }
            let d = parent
                .sub(Frac::new(left.len() as i128, n).mul(gini(&counts(&left))))
                .sub(Frac::new(right.len() as i128, n).mul(gini(&counts(&right))));
            if d.num > 0 && best.map_or(true, |b| d.gt(b.2)) {
                best = Some((f, t, d));
            }
        }
    }
    best
}

fn column<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    match rng.gen_range(0..5) {
        0 => (0..n).map(|_| rng.gen_range(0..4) as f64).collect(),
        1 => (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect(),
        2 => vec![rng.gen_range(0.0..1.0); n],
        3 => {
            let base: f64 = rng.gen_range(1.0..2.0);
            (0..n).map(|_| if rng.gen_bool(0.5) { base } else { f64::from_bits(base.to_bits() + 1) }).collect()
        }
        _ => (0..n).map(|_| (rng.gen_range(0..20) as f64) * 0.25).collect(),
    }
}

/// At most 200 examples and 5 features.
pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xacce_97);
    let n = rng.gen_range(1..=200);
    let n_feat = rng.gen_range(1..=5);
    let n_classes = rng.gen_range(2..=9);
    let cols: Vec<Vec<f64>> = (0..n_feat).map(|_| column(&mut rng, n)).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    let labels: Vec<u8> = match rng.gen_range(0..3) {
        0 => rows.iter().map(|r| ((r[0].abs() as usize + rng.gen_range(0..2)) % n_classes) as u8).collect(),
        1 => vec![rng.gen_range(0..n_classes) as u8; n],
        _ => (0..n).map(|_| rng.gen_range(0..n_classes) as u8).collect(),
    };
    let mut feats: Vec<usize> = (0..n_feat).collect();
    feats.shuffle(&mut rng);
    let candidates = feats[..rng.gen_range(1..=n_feat)].to_vec();
    let min_leaf = match rng.gen_range(0..4) {
        0 => 1,
        1 => 50,
        _ => rng.gen_range(1..=(n / 2).max(1)),
    };
    Instance { rows, labels, n_classes, candidates, min_leaf }
}

/// Returns (mismatching seeds, instances with a split).
pub fn run(instances: u64) -> (Vec<u64>, usize) {
    let mut mismatches = Vec::new();
    let mut with_split = 0;
    for seed in 0..instances {
        let inst = instance(seed);
        let names = (0..inst.rows[0].len()).map(|i| format!("f{i}")).collect();
        let class_set = (0..inst.n_classes as u8).collect();
        let data = Dataset::new(inst.rows.clone(), &inst.labels, class_set, names).expect("valid instance");
        let all: Vec<usize> = (0..data.len()).collect();
        let got = best_split(&data, &all, &inst.candidates, inst.min_leaf).expect("non-empty node");
        let ok = match (got, brute_force(&inst)) {
            (None, None) => true,
            (Some(Split { feature, threshold, decrease }), Some((f, t, d))) => {
                with_split += 1;
                feature == f && threshold.to_bits() == t.to_bits() && (decrease - d.to_f64()).abs() < 1e-12
            }
            _ => false,
        };
        if !ok {
            mismatches.push(seed);
        }
    }
    (mismatches, with_split)
}
