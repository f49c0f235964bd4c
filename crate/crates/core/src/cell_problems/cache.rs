//! Reuse of cell solutions between blocks whose local problems coincide.
//!
//! Cell problems only see the coefficient and labels on `R+` and the relative
//! placement of the nested regions, so periodic media produce many identical
//! local problems. The key stores that data exactly; a hash collision can
//! never return the wrong solution.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::grid::RegionSet;
use crate::media::MediumSpec;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalKey {
    shape: [usize; 10],
    h: u64,
    kappa: Vec<u64>,
    labels: Vec<u8>,
}

impl LocalKey {
    pub fn new(medium: &MediumSpec, regions: &RegionSet) -> Self {
        let o = regions.oversampled;
        let rel = |r: &crate::grid::BlockRect| [r.i0 - o.i0, r.j0 - o.j0];
        let t = rel(&regions.target);
        let v = rel(&regions.velocity);
        let i = rel(&regions.integration);
        let shape = [
            o.i1 - o.i0,
            o.j1 - o.j0,
            regions.cells_per_block,
            t[0],
            t[1],
            v[0] * 1000 + (regions.velocity.i1 - regions.velocity.i0),
            v[1] * 1000 + (regions.velocity.j1 - regions.velocity.j0),
            i[0] * 1000 + (regions.integration.i1 - regions.integration.i0),
            i[1] * 1000 + (regions.integration.j1 - regions.integration.j0),
            medium.n_continua(),
        ];
        let rect = regions.oversampled_cells();
        let mut kappa = Vec::with_capacity(rect.n_cells());
        let mut labels = Vec::with_capacity(rect.n_cells());
        for (ci, cj) in rect.cells() {
            kappa.push(medium.kappa.at(ci, cj).to_bits());
            labels.push(medium.continua.label(ci, cj) as u8);
        }
        Self {
            shape,
            h: regions.h.to_bits(),
            kappa,
            labels,
        }
    }
}

/// Thread-safe map from local problem to its solution.
pub struct CellCache<T> {
    map: Mutex<HashMap<LocalKey, Arc<T>>>,
    enabled: bool,
}

impl<T> CellCache<T> {
    pub fn new(enabled: bool) -> Self {
        Self {
            map: Mutex::new(HashMap::new()),
            enabled,
        }
    }

    /// Return the cached value for `key`, computing it with `make` on a miss.
    /// Concurrent misses on the same key may both compute; the results are
    /// identical because the solve is deterministic.
    pub fn get_or_try_insert<E>(&self, key: LocalKey, make: impl FnOnce() -> Result<T, E>) -> Result<Arc<T>, E> {
        if !self.enabled {
            return make().map(Arc::new);
        }
        if let Some(v) = self.map.lock().unwrap().get(&key) {
            return Ok(Arc::clone(v));
        }
        let v = Arc::new(make()?);
        self.map.lock().unwrap().entry(key).or_insert_with(|| Arc::clone(&v));
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
