use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("confusion matrix must be square and non-empty")]
    NotSquare,
    #[error("confusion matrix has no observations")]
    Empty,
    #[error("kappa undefined: chance agreement is 1 but observed agreement is not")]
    KappaUndefined,
}

fn check(confusion: &[Vec<u64>]) -> Result<u64, MetricError> {
    let k = confusion.len();
    if k == 0 || confusion.iter().any(|row| row.len() != k) {
        return Err(MetricError::NotSquare);
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(MetricError::Empty);
    }
    Ok(total)
}

/// Fraction of observations on the diagonal. Rows are truth, columns predictions.
pub fn accuracy(confusion: &[Vec<u64>]) -> Result<f64, MetricError> {
    let total = check(confusion)?;
    let trace: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    Ok(trace as f64 / total as f64)
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`.
pub fn cohens_kappa(confusion: &[Vec<u64>]) -> Result<f64, MetricError> {
    let total = check(confusion)?;
    let k = confusion.len();
    let n = total as f64;
    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let p_o = trace as f64 / n;
    let chance: f64 = (0..k)
        .map(|i| {
            let row: u64 = confusion[i].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[i]).sum();
            row as f64 * col as f64
        })
        .sum();
    let p_e = chance / (n * n);
    if p_e == 1.0 {
        return if p_o == 1.0 { Ok(1.0) } else { Err(MetricError::KappaUndefined) };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        let c = vec![vec![10, 0, 0], vec![0, 10, 0], vec![0, 0, 10]];
        assert_eq!(accuracy(&c).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&c).unwrap(), 1.0);
    }

    #[test]
    fn chance_agreement() {
        let c = vec![vec![1, 1], vec![1, 1]];
        assert_eq!(accuracy(&c).unwrap(), 0.5);
        assert_eq!(cohens_kappa(&c).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_kappa() {
        // p_o = 35/50, p_e = (25*30 + 25*20) / 2500 = 0.5
        let c = vec![vec![20, 5], vec![10, 15]];
        assert!((accuracy(&c).unwrap() - 0.7).abs() < 1e-12);
        assert!((cohens_kappa(&c).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_perfect() {
        let c = vec![vec![5, 0], vec![0, 0]];
        assert_eq!(cohens_kappa(&c).unwrap(), 1.0);
    }

    #[test]
    fn malformed_matrices() {
        assert_eq!(accuracy(&[]), Err(MetricError::NotSquare));
        assert_eq!(accuracy(&[vec![1, 2]]), Err(MetricError::NotSquare));
        assert_eq!(cohens_kappa(&[vec![0, 0], vec![0, 0]]), Err(MetricError::Empty));
    }
}
