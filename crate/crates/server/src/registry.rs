//! Latest trained models per scope. A scope's three (model, report) pairs
//! are replaced together by swapping one `Arc`.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use serde::Serialize;

use happimeter_core::forest::{EvaluationReport, ForestModel, Scope, Target};

#[derive(Debug, Clone, Serialize)]
pub struct TrainedModel {
    pub model: ForestModel,
    pub report: Option<EvaluationReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScopeEntry {
    pub scope: Scope,
    pub trained_at: DateTime<Utc>,
    pub n_examples: usize,
    pub models: BTreeMap<Target, TrainedModel>,
}

impl ScopeEntry {
    pub fn model(&self, target: Target) -> Option<&ForestModel> {
        self.models.get(&target).map(|m| &m.model)
    }
}

#[derive(Default)]
pub struct Registry {
    scopes: RwLock<BTreeMap<Scope, Arc<ScopeEntry>>>,
    training: Mutex<()>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn get(&self, scope: &Scope) -> Option<Arc<ScopeEntry>> {
        self.scopes.read().expect("registry lock").get(scope).cloned()
    }

    /// Individual entry when present, else the general one. The flag is true
    /// on fallback.
    pub fn resolve(&self, user: &happimeter_core::domain::UserId) -> Option<(Arc<ScopeEntry>, bool)> {
        let scopes = self.scopes.read().expect("registry lock");
        if let Some(e) = scopes.get(&Scope::Individual(user.clone())) {
            return Some((e.clone(), false));
        }
        scopes.get(&Scope::General).map(|e| (e.clone(), true))
    }

    pub fn install(&self, entry: ScopeEntry) {
        let entry = Arc::new(entry);
        self.scopes.write().expect("registry lock").insert(entry.scope.clone(), entry);
    }

    pub fn remove(&self, scope: &Scope) {
        self.scopes.write().expect("registry lock").remove(scope);
    }

    pub fn scopes(&self) -> Vec<Scope> {
        self.scopes.read().expect("registry lock").keys().cloned().collect()
    }

    /// Held for the duration of a training run so runs don't interleave.
    pub fn training_lock(&self) -> MutexGuard<'_, ()> {
        self.training.lock().unwrap_or_else(|p| p.into_inner())
    }
}
