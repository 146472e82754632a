//! Central finite-difference verification of tape gradients. The closure
//! rebuilds its computation from the store on every call, so perturbing a
//! parameter and re-evaluating exercises exactly the production code path.

use crate::rng::substream;
use crate::tape::ParamStore;
use ndarray::Array2;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Base step; scaled by max(1, |value|) per entry.
    pub eps: f64,
    /// Cap on checked entries per parameter; larger matrices are sampled.
    pub max_entries_per_param: usize,
    /// Seed for the entry sampler.
    pub seed: u64,
    /// Entries where analytic and numeric are both below this are treated
    /// as matching zero; the quotient is noise there.
    pub skip_below: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-5, max_entries_per_param: 64, seed: 0, skip_below: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (parameter name, flat entry index) of the worst comparison.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compare analytic gradients against central differences. `f` returns the
/// loss and the full per-parameter gradient vector for the current store.
pub fn gradient_check(
    store: &mut ParamStore,
    f: &dyn Fn(&ParamStore) -> (f64, Vec<Array2<f64>>),
    opts: &GradCheckOptions,
) -> GradCheckReport {
    let (_, analytic) = f(store);
    assert_eq!(analytic.len(), store.len(), "gradient vector misaligned");

    let mut report = GradCheckReport { max_rel_err: 0.0, worst: None, checked: 0 };
    for p in 0..store.len() {
        if !store.is_trainable(p) {
            continue;
        }
        let n = store.value(p).len();
        let mut rng = substream(opts.seed, &format!("gradcheck:{}", store.name(p)));
        let entries: Vec<usize> = if n <= opts.max_entries_per_param {
            (0..n).collect()
        } else {
            let mut picked = std::collections::BTreeSet::new();
            while picked.len() < opts.max_entries_per_param {
                picked.insert(rng.gen_range(0..n));
            }
            picked.into_iter().collect()
        };

        for e in entries {
            let (r, c) = flat_to_rc(store.value(p), e);
            let orig = store.value(p)[(r, c)];
            let h = opts.eps * orig.abs().max(1.0);

            store.value_mut(p)[(r, c)] = orig + h;
            let (up, _) = f(store);
            store.value_mut(p)[(r, c)] = orig - h;
            let (down, _) = f(store);
            store.value_mut(p)[(r, c)] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = analytic[p][(r, c)];
            report.checked += 1;
            if a.abs() < opts.skip_below && numeric.abs() < opts.skip_below {
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((store.name(p).to_string(), e));
            }
        }
    }
    report
}

fn flat_to_rc(a: &Array2<f64>, e: usize) -> (usize, usize) {
    (e / a.ncols(), e % a.ncols())
}
