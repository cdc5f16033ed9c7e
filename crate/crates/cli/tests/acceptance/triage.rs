use anyhow::{ensure, Result};
use blurscan_core::classify::Prediction;
use blurscan_core::triage::{
    aggregate, apply_threshold, consistency, roc_auc, sweep, threshold_grid, AggregateOptions, Decision, Method,
    RepeatSet,
};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SETS: usize = 1000;
const TARGET: f64 = 0.15;

/// A probability vector over `k` classes. Coarse quantization makes tied
/// maxima and tied confidences common.
fn random_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    if rng.gen_bool(0.4) {
        let q: u32 = *[2, 4, 5, 10].choose(rng).unwrap();
        let mut units = vec![0u32; k];
        for _ in 0..q {
            units[rng.gen_range(0..k)] += 1;
        }
        units.iter().map(|&u| u as f64 / q as f64).collect()
    } else {
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0f64).powi(3) + 1e-6).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    }
}

/// Class and confidence straight from the definition: the lowest index
/// whose probability no other class exceeds.
fn oracle_argmax(p: &[f64]) -> (usize, f64) {
    let c = (0..p.len()).find(|&i| p.iter().all(|&q| q <= p[i])).unwrap();
    (c, p[c])
}

struct Expected {
    class: usize,
    confidence: f64,
    repeat: Option<usize>,
    probabilities: Vec<f64>,
}

fn oracle_aggregate(probs: &[Vec<f64>; 3], method: Method) -> Vec<Expected> {
    let single = |r: usize| {
        let (class, confidence) = oracle_argmax(&probs[r]);
        Expected {
            class,
            confidence,
            repeat: Some(r),
            probabilities: probs[r].clone(),
        }
    };
    match method {
        Method::AllScans => (0..3).map(single).collect(),
        Method::MaxCi => {
            let ci: Vec<f64> = probs.iter().map(|p| oracle_argmax(p).1).collect();
            // the earliest repeat that no other repeat beats
            let r = (0..3).find(|&r| ci.iter().all(|&c| c <= ci[r])).unwrap();
            vec![single(r)]
        }
        Method::WeightedCi => {
            let votes: Vec<(usize, f64)> = probs.iter().map(|p| oracle_argmax(p)).collect();
            let total = votes[0].1 + votes[1].1 + votes[2].1;
            let weighted = votes[0].0 as f64 * votes[0].1 + votes[1].0 as f64 * votes[1].1 + votes[2].0 as f64 * votes[2].1;
            let k = probs[0].len();
            let score = weighted / total;
            // round half up, then clamp into the class range
            let mut class = score.floor() as i64 + i64::from(score - score.floor() >= 0.5);
            class = class.clamp(0, k as i64 - 1);
            let probabilities = (0..k)
                .map(|c| (probs[0][c] * votes[0].1 + probs[1][c] * votes[1].1 + probs[2][c] * votes[2].1) / total)
                .collect();
            vec![Expected {
                class: class as usize,
                confidence: total / 3.0,
                repeat: None,
                probabilities,
            }]
        }
    }
}

fn same(got: &Decision, want: &Expected) -> bool {
    got.class == want.class
        && got.confidence == want.confidence
        && got.repeat == want.repeat
        && got.probabilities == want.probabilities
}

fn repeat_set(id: &str, truth: usize, probs: &[Vec<f64>; 3]) -> Result<RepeatSet> {
    let preds = (0..3)
        .map(|r| Prediction::new(id, r, probs[r].clone()))
        .collect::<blurscan_core::Result<Vec<_>>>()?;
    Ok(RepeatSet::new(id, Some(truth), preds)?)
}

fn worked_example() -> Result<()> {
    let probs = [
        vec![0.05, 0.05, 0.9, 0.0],
        vec![0.1, 0.05, 0.05, 0.8],
        vec![0.1, 0.1, 0.1, 0.7],
    ];
    let set = repeat_set("worked", 3, &probs)?;
    let classes: Vec<usize> = set.predictions.iter().map(|p| p.predicted_class).collect();
    let cis: Vec<f64> = set.predictions.iter().map(|p| p.confidence).collect();
    ensure!(classes == [2, 3, 3] && cis == [0.9, 0.8, 0.7], "worked example set up as {classes:?} / {cis:?}");
    let d = aggregate(&set, Method::WeightedCi, &AggregateOptions::default())?;
    ensure!(d[0].class == 3, "classes (2,3,3) with CIs (0.9,0.8,0.7) give weighted class {}", d[0].class);
    Ok(())
}

pub fn triage_arithmetic() -> Result<String> {
    worked_example()?;
    let grid = threshold_grid(101);
    ensure!(
        grid.len() == 101 && grid.iter().enumerate().all(|(i, &t)| t == i as f64 / 100.0),
        "threshold grid is not 0, 0.01, …, 1"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0xC6);
    let opts = AggregateOptions::default();
    let mut batches = [(4usize, Vec::new(), Vec::new()), (2, Vec::new(), Vec::new())];
    for i in 0..SETS {
        let k = if i % 4 == 3 { 2 } else { 4 };
        let probs: [Vec<f64>; 3] = std::array::from_fn(|_| random_probs(&mut rng, k));
        let truth = rng.gen_range(0..k);
        let set = repeat_set(&format!("core{i:04}"), truth, &probs)?;
        let b = batches.iter_mut().find(|b| b.0 == k).unwrap();
        b.1.push(set);
        b.2.push(probs);
    }

    let mut checked = 0usize;
    for (k, sets, probs) in &batches {
        for method in [Method::AllScans, Method::MaxCi, Method::WeightedCi] {
            let mut decisions = Vec::new();
            for (set, p) in sets.iter().zip(probs) {
                let got = aggregate(set, method, &opts)?;
                let want = oracle_aggregate(p, method);
                ensure!(
                    got.len() == want.len() && got.iter().zip(&want).all(|(g, w)| same(g, w)),
                    "{}: {} aggregate differs from brute force",
                    set.core_id,
                    method.name()
                );
                decisions.extend(got);
            }

            // thresholds on and off the grid, including exact confidences
            let mut thetas = grid.clone();
            thetas.extend(decisions.iter().take(20).map(|d| d.confidence));
            thetas.push(1.5);
            for &theta in &thetas {
                let t = apply_threshold(&decisions, theta);
                let below = decisions.iter().filter(|d| !(d.confidence >= theta)).count();
                ensure!(
                    t.indeterminate_fraction == below as f64 / decisions.len() as f64,
                    "{}: indeterminate fraction at θ={theta}",
                    method.name()
                );
                for (td, d) in t.decisions.iter().zip(&decisions) {
                    let want = if d.confidence >= theta { Some(d.class) } else { None };
                    ensure!(td.outcome == want, "{}: {} at θ={theta}", method.name(), d.core_id);
                }
            }

            let curve = sweep(&decisions, &grid, TARGET)?;
            let mut star = None;
            for (pt, &theta) in curve.points.iter().zip(&grid) {
                let det: Vec<&Decision> = decisions.iter().filter(|d| d.confidence >= theta).collect();
                let correct = det.iter().filter(|d| Some(d.class) == d.truth).count();
                let ind = (decisions.len() - det.len()) as f64 / decisions.len() as f64;
                let acc = (!det.is_empty()).then(|| correct as f64 / det.len() as f64);
                ensure!(
                    pt.threshold == theta
                        && pt.determinate == det.len()
                        && pt.accuracy == acc
                        && pt.indeterminate_fraction == ind,
                    "{} ({k} classes): sweep point at θ={theta} is {pt:?}, expected {acc:?} / {ind}",
                    method.name()
                );
                if star.is_none() && ind >= TARGET {
                    star = Some(theta);
                }
            }
            ensure!(
                curve.theta_star == star,
                "{}: θ* {:?}, brute force {star:?}",
                method.name(),
                curve.theta_star
            );
            checked += decisions.len();
        }

        let c = consistency(sets)?;
        let mut total = 0.0;
        for ((id, v), p) in c.per_core.iter().zip(probs) {
            let classes: Vec<usize> = p.iter().map(|q| oracle_argmax(q).0).collect();
            let mode = (0..*k).map(|c| classes.iter().filter(|&&x| x == c).count()).max().unwrap();
            let want = mode as f64 / 3.0;
            ensure!(*v == want, "{id}: consistency {v}, brute force {want}");
            total += want;
        }
        let overall = total / sets.len() as f64;
        ensure!(c.overall == overall, "overall consistency {} vs {overall}", c.overall);
    }
    Ok(format!(
        "worked example gives class 3; {SETS} sets ({} 4-class, {} 2-class), {checked} decisions, 3 methods \
         with thresholds, sweeps, θ* and consistency all exact",
        batches[0].1.len(),
        batches[1].1.len()
    ))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
fn concordance(samples: &[(bool, f64)]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for p in samples.iter().filter(|s| s.0) {
        for n in samples.iter().filter(|s| !s.0) {
            pairs += 1;
            twice += if p.1 > n.1 {
                2
            } else if p.1 == n.1 {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pairs) as f64
}

pub fn auc_oracle() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    let mut worst = 0f64;
    let mut tied_sets = 0;
    for i in 0..200 {
        let n = rng.gen_range(2..=50);
        let coarse = rng.gen_bool(0.5);
        let mut samples: Vec<(bool, f64)> = (0..n)
            .map(|_| {
                let s = if coarse { rng.gen_range(0..5) as f64 / 4.0 } else { rng.gen() };
                (rng.gen_bool(0.5), s)
            })
            .collect();
        samples[0].0 = true;
        samples[1].0 = false;
        let distinct = {
            let mut s: Vec<f64> = samples.iter().map(|s| s.1).collect();
            s.sort_by(f64::total_cmp);
            s.dedup();
            s.len()
        };
        tied_sets += (distinct < n) as usize;
        let auc = roc_auc(&samples)?.auc;
        let want = concordance(&samples);
        let d = (auc - want).abs();
        ensure!(d <= 1e-12, "set {i} (n={n}): AUC {auc} vs concordance {want}");
        worst = worst.max(d);
    }

    let separated: Vec<(bool, f64)> = (0..10).map(|i| (i >= 5, i as f64)).collect();
    let auc = roc_auc(&separated)?.auc;
    ensure!(auc == 1.0, "perfect separation gives AUC {auc}");
    let constant: Vec<(bool, f64)> = (0..10).map(|i| (i % 3 == 0, 0.4)).collect();
    let auc = roc_auc(&constant)?.auc;
    ensure!(auc == 0.5, "constant scores give AUC {auc}");
    Ok(format!(
        "200 sets ({tied_sets} with tied scores), worst |AUC - concordance| {worst:.1e}; separation 1.0, constant 0.5"
    ))
}
