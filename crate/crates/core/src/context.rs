//! Shared solver state: the grid, the initial condition and the caches of
//! eigendecompositions and Mittag-Leffler tables.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::Result;
use crate::forward::{project_initial_condition, ForwardModel, InitialCondition, ParameterVector, Trajectory};
use crate::mittag_leffler::MlfEvaluator;
use crate::spectral::{build_operator_matrix, eigendecompose, Grid1D, SpectralDecomposition, SpectralKey};

/// Decomposition together with the projection of the context's initial
/// condition onto it.
#[derive(Debug)]
pub struct ModalData {
    pub decomposition: Arc<SpectralDecomposition>,
    pub coefficients: Vec<f64>,
}

/// Caches are safe for concurrent use. Entries are computed outside the
/// lock; two threads racing on one key both compute it and the last insert
/// wins, which is harmless because the computation is deterministic.
pub struct SolverContext {
    grid: Grid1D,
    initial: InitialCondition,
    cache_dir: Option<PathBuf>,
    modal: Mutex<HashMap<SpectralKey, Arc<ModalData>>>,
    evaluators: Mutex<HashMap<u64, Arc<MlfEvaluator>>>,
    eigensolves: AtomicUsize,
}

impl std::fmt::Debug for SolverContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverContext")
            .field("grid", &self.grid)
            .field("initial", &self.initial)
            .field("cache_dir", &self.cache_dir)
            .field("eigensolves", &self.eigensolves())
            .finish()
    }
}

impl SolverContext {
    pub fn new(grid: Grid1D, initial: InitialCondition) -> Self {
        Self {
            grid,
            initial,
            cache_dir: None,
            modal: Mutex::new(HashMap::new()),
            evaluators: Mutex::new(HashMap::new()),
            eigensolves: AtomicUsize::new(0),
        }
    }

    /// `n_interior` nodes and the default smooth initial bump.
    pub fn with_default_bump(n_interior: usize) -> Result<Self> {
        Ok(Self::new(Grid1D::new(n_interior)?, InitialCondition::smooth_bump()))
    }

    /// Persist decompositions as binary records under `dir`.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        self.cache_dir = Some(dir);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn initial(&self) -> &InitialCondition {
        &self.initial
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.cache_dir.as_deref()
    }

    /// Number of eigensolves performed (cache misses, disk hits excluded).
    pub fn eigensolves(&self) -> usize {
        self.eigensolves.load(Ordering::Relaxed)
    }

    pub fn modal(&self, alpha1: f64, alpha2: f64) -> Result<Arc<ModalData>> {
        let key = SpectralKey::new(self.grid.n_interior(), alpha1, alpha2);
        if let Some(hit) = self.modal.lock().expect("modal cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let decomposition = Arc::new(self.decompose(key, alpha1, alpha2)?);
        let coefficients = project_initial_condition(&decomposition, &self.initial)?;
        let data = Arc::new(ModalData {
            decomposition,
            coefficients,
        });
        self.modal
            .lock()
            .expect("modal cache poisoned")
            .insert(key, data.clone());
        Ok(data)
    }

    fn decompose(&self, key: SpectralKey, alpha1: f64, alpha2: f64) -> Result<SpectralDecomposition> {
        let path = self.cache_dir.as_ref().map(|d| d.join(key.file_name()));
        if let Some(p) = &path {
            if p.exists() {
                if let Ok(d) = SpectralDecomposition::load(p) {
                    if d.key() == key {
                        return Ok(d);
                    }
                }
            }
        }
        // Canonical order so (a, b) and (b, a) produce the same bits.
        let (lo, hi) = if alpha1 <= alpha2 {
            (alpha1, alpha2)
        } else {
            (alpha2, alpha1)
        };
        let matrix = build_operator_matrix(&self.grid, lo, hi)?;
        let d = eigendecompose(&matrix)?;
        self.eigensolves.fetch_add(1, Ordering::Relaxed);
        if let Some(p) = &path {
            d.save(p)?;
        }
        Ok(d)
    }

    pub fn evaluator(&self, beta: f64) -> Result<Arc<MlfEvaluator>> {
        let key = beta.to_bits();
        if let Some(hit) = self.evaluators.lock().expect("evaluator cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let ev = Arc::new(MlfEvaluator::new(beta)?);
        self.evaluators
            .lock()
            .expect("evaluator cache poisoned")
            .insert(key, ev.clone());
        Ok(ev)
    }

    /// Forward model at `θ`; `β = 1` is admitted for oracle comparisons.
    pub fn forward_model(&self, theta: &ParameterVector) -> Result<ForwardModel> {
        theta.validate_oracle()?;
        let modal = self.modal(theta.alpha1, theta.alpha2)?;
        ForwardModel::from_parts(
            modal.decomposition.clone(),
            modal.coefficients.clone(),
            self.evaluator(theta.beta)?,
        )
    }

    /// `u(t_i, 0; θ)` on the given times, `θ` in the admissible set.
    pub fn trajectory(&self, theta: &ParameterVector, times: &[f64]) -> Result<Trajectory> {
        theta.validate()?;
        self.forward_model(theta)?.evaluate_trajectory(times)
    }
}
