#![allow(dead_code)]

use dialact::corpus::{Dataset, LabelSet, Turn};
use dialact::nn::{Graph, ParamStore, Var};
use dialact::Result;

/// Label shares of the German appointment-scheduling corpus, in percent.
pub const TABLE1: [(&str, usize); 16] = [
    ("FEEDBACK", 28),
    ("SUGGEST", 19),
    ("INFORM", 18),
    ("REQUEST", 9),
    ("GREET", 4),
    ("BYE", 4),
    ("INIT", 4),
    ("BACKCHANNEL", 3),
    ("DELIBERATE", 3),
    ("INTRODUCE", 2),
    ("COMMIT", 1),
    ("CLOSE", 1),
    ("POLIT. FORM.", 1),
    ("THANK", 1),
    ("DEFER", 1),
    ("OFFER", 1),
];

pub fn table1_labels() -> LabelSet {
    LabelSet::new(TABLE1.iter().map(|(t, _)| *t)).unwrap()
}

pub fn turn(id: usize, label: &str) -> Turn {
    Turn {
        dialogue_id: format!("d{id}"),
        turn_index: 0,
        speaker: "s".into(),
        label: label.into(),
        text_original: String::new(),
        text_translated: None,
    }
}

/// Dataset with `counts[i]` turns of label `i`, interleaved round-robin.
pub fn dataset_with_counts(labels: &LabelSet, counts: &[usize]) -> Dataset {
    let mut left = counts.to_vec();
    let mut turns = Vec::new();
    while left.iter().any(|&c| c > 0) {
        for (i, c) in left.iter_mut().enumerate() {
            if *c > 0 {
                *c -= 1;
                turns.push(turn(turns.len(), labels.tag(i)));
            }
        }
    }
    Dataset::new(labels.clone(), turns).unwrap()
}

/// Largest-remainder apportionment in exact rational arithmetic.
pub fn oracle_quotas(counts: &[usize], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let mut quotas: Vec<usize> = counts.iter().map(|c| c * n / total).collect();
    let mut rem: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .map(|(i, c)| (c * n % total, i))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = n - quotas.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(missing) {
        quotas[i] += 1;
    }
    quotas
}

/// Outcome of one finite-difference comparison.
#[derive(Debug)]
pub struct GradCheck {
    /// Largest norm-wise relative error over parameter tensors.
    pub max_rel_error: f64,
    pub worst: String,
    pub coordinates: usize,
    /// Coordinates skipped because the loss has a kink within ±ε there.
    pub kinks: usize,
}

/// Compares the analytic gradient of `build`'s scalar output against central
/// differences with step `eps`, one parameter tensor at a time:
/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.
///
/// A coordinate where the one-sided slopes disagree, or where central
/// differences at `eps` and `eps / 2` disagree, sits near a ReLU or max
/// kink, where the loss has no derivative; it is excluded from both norms and
/// counted. `frozen(name, i)` marks coordinates that are constants by design.
pub fn check_gradients<F>(
    store: &mut ParamStore<f64>,
    build: F,
    eps: f64,
    frozen: &dyn Fn(&str, usize) -> bool,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let out = build(&mut g, store)?;
        Ok(g.value(out).data()[0])
    };
    store.zero_grads();
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    g.backward(loss, store)?;
    let f0 = eval(store)?;

    let mut result = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        coordinates: 0,
        kinks: 0,
    };
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let id = store.id(&name).unwrap();
        let analytic = store.grad(id).data().to_vec();
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for (i, &grad) in analytic.iter().enumerate() {
            if frozen(&name, i) {
                continue;
            }
            let orig = store.value(id).data()[i];
            let mut at = |x: f64| -> Result<f64> {
                store.value_mut(id).data_mut()[i] = x;
                eval(store)
            };
            let (fp, fm) = (at(orig + eps)?, at(orig - eps)?);
            let (hp, hm) = (at(orig + eps / 2.0)?, at(orig - eps / 2.0)?);
            store.value_mut(id).data_mut()[i] = orig;
            let (fwd, bwd) = ((fp - f0) / eps, (f0 - fm) / eps);
            let scale = fwd.abs().max(bwd.abs()).max(1e-6);
            let numeric = (fp - fm) / (2.0 * eps);
            let half = (hp - hm) / eps;
            // On smooth coordinates the two central differences agree to
            // O(eps^2); a kink inside the stencil breaks that agreement.
            let inconsistent = (numeric - half).abs() > 1e-3 * numeric.abs().max(half.abs()) + 1e-6;
            if (fwd - bwd).abs() > 0.05 * scale + 1e-4 || inconsistent {
                result.kinks += 1;
                continue;
            }
            diff2 += (grad - numeric).powi(2);
            a2 += grad * grad;
            n2 += numeric * numeric;
            result.coordinates += 1;
        }
        let denom = a2.sqrt().max(n2.sqrt());
        let rel = if denom < 1e-12 {
            diff2.sqrt()
        } else {
            diff2.sqrt() / denom
        };
        if rel > result.max_rel_error || result.worst.is_empty() {
            result.max_rel_error = result.max_rel_error.max(rel);
            if rel >= result.max_rel_error {
                result.worst = name.clone();
            }
        }
    }
    Ok(result)
}
