use crate::autodiff::params::{GradBuffer, ParamStore};
use crate::{Error, Result};

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    /// Largest relative error seen across all checked elements.
    pub max_rel: f64,
    /// Number of parameter elements compared.
    pub checked: usize,
}

/// Compares `analytic` gradients against central finite differences of `f`
/// over every element of every parameter in `store`.
///
/// `f` must be a deterministic function of the store: stochastic choices
/// (dropout masks, operand-order coins) have to be frozen by the caller,
/// otherwise the two evaluations per element measure noise, not slope.
///
/// Relative error uses a floored denominator so that near-zero gradient pairs
/// compare absolutely. Fails with [`Error::GradCheck`] when the worst
/// relative error reaches `tol`.
pub fn check_gradients(
    store: &mut ParamStore,
    analytic: &GradBuffer,
    mut f: impl FnMut(&ParamStore) -> Result<f64>,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + h;
            let fp = f(store);
            store.get_mut(id).data_mut()[k] = orig - h;
            let fm = f(store);
            store.get_mut(id).data_mut()[k] = orig;
            let (fp, fm) = (fp?, fm?);
            let fd = (fp - fm) / (2.0 * h);
            let an = analytic.get(id).data()[k];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    if max_rel >= tol {
        return Err(Error::GradCheck { max_rel, tol });
    }
    Ok(GradCheckReport { max_rel, checked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::Tape;
    use crate::autodiff::tensor::Tensor;

    fn quadratic_loss(store: &ParamStore) -> Result<f64> {
        let mut tape = Tape::new();
        let w = tape.param(store, store.id("w").unwrap());
        let sq = tape.l2_norm_sq(w);
        let sc = tape.scale(sq, 0.5);
        tape.value(sc).scalar_value()
    }

    #[test]
    fn accepts_correct_gradient() {
        let mut store = ParamStore::new();
        let w = store.register("w", Tensor::vector(vec![0.7, -1.2, 0.3]));
        let mut grads = GradBuffer::zeros_like(&store);
        let mut tape = Tape::new();
        let wn = tape.param(&store, w);
        let sq = tape.l2_norm_sq(wn);
        let sc = tape.scale(sq, 0.5);
        tape.backward(sc, &mut grads).unwrap();

        let report = check_gradients(&mut store, &grads, quadratic_loss, 1e-5, 1e-4).unwrap();
        assert_eq!(report.checked, 3);
        assert!(report.max_rel < 1e-6, "max_rel = {}", report.max_rel);
    }

    #[test]
    fn rejects_wrong_gradient() {
        let mut store = ParamStore::new();
        let w = store.register("w", Tensor::vector(vec![0.7, -1.2, 0.3]));
        let mut grads = GradBuffer::zeros_like(&store);
        grads.accumulate(w, &Tensor::vector(vec![100.0, 0.0, 0.0]));
        let err = check_gradients(&mut store, &grads, quadratic_loss, 1e-5, 1e-4);
        assert!(matches!(err, Err(Error::GradCheck { .. })));
    }

    #[test]
    fn store_restored_after_check() {
        let mut store = ParamStore::new();
        let w = store.register("w", Tensor::vector(vec![0.7, -1.2, 0.3]));
        let before = store.get(w).clone();
        let mut grads = GradBuffer::zeros_like(&store);
        let mut tape = Tape::new();
        let wn = tape.param(&store, w);
        let sq = tape.l2_norm_sq(wn);
        let sc = tape.scale(sq, 0.5);
        tape.backward(sc, &mut grads).unwrap();
        check_gradients(&mut store, &grads, quadratic_loss, 1e-5, 1e-4).unwrap();
        assert_eq!(store.get(w), &before);
    }
}
