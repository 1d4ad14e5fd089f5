use crate::autodiff::tensor::Tensor;

/// Handle to a tensor registered in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, trainable tensors. Registration order is the storage order, so
/// iteration is deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under `name`. Names must be unique.
    pub fn register(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            self.id(name).is_none(),
            "duplicate parameter name {name:?}"
        );
        self.entries.push((name.to_string(), value));
        ParamId(self.entries.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|(n, _)| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Sum of squared entries over the given parameters.
    pub fn frob_sq(&self, ids: &[ParamId]) -> f64 {
        ids.iter().map(|&id| self.get(id).frob_sq()).sum()
    }

    /// Copies every parameter value, e.g. to remember the best epoch while
    /// training continues.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    /// Writes a snapshot back. The snapshot must come from this store (same
    /// parameter count and shapes).
    pub fn restore(&mut self, snap: &[Tensor]) -> crate::Result<()> {
        if snap.len() != self.entries.len() {
            return Err(crate::Error::Shape {
                op: "restore",
                detail: format!(
                    "snapshot has {} arrays, store has {}",
                    snap.len(),
                    self.entries.len()
                ),
            });
        }
        for ((name, t), s) in self.entries.iter_mut().zip(snap) {
            if t.rows() != s.rows() || t.cols() != s.cols() {
                return Err(crate::Error::Shape {
                    op: "restore",
                    detail: format!("parameter {name} shape mismatch"),
                });
            }
            t.data_mut().copy_from_slice(s.data());
        }
        Ok(())
    }
}

/// Per-parameter gradient accumulators, shaped like a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct GradBuffer {
    grads: Vec<Tensor>,
}

impl GradBuffer {
    pub fn zeros_like(store: &ParamStore) -> Self {
        GradBuffer {
            grads: store
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn accumulate(&mut self, id: ParamId, delta: &Tensor) {
        self.grads[id.0].add_assign(delta);
    }

    /// Adds `delta` into row `row` of parameter `id`'s gradient. Used by
    /// embedding-row lookups, whose gradient touches a single row.
    pub fn accumulate_row(&mut self, id: ParamId, row: usize, delta: &[f64]) {
        let dst = self.grads[id.0].row_mut(row);
        debug_assert_eq!(dst.len(), delta.len());
        for (d, s) in dst.iter_mut().zip(delta) {
            *d += s;
        }
    }

    pub fn reset(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
