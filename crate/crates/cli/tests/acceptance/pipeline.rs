use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use blurscan_cli::{run, Command, PipelineConfig};
use blurscan_core::coreprep::PatchStack;
use blurscan_core::imaging::{read_raster, read_sequence, write_raster, write_sequence, FrameManifest, Raster};
use blurscan_core::triage::Method;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const METHODS: [Method; 3] = [Method::AllScans, Method::MaxCi, Method::WeightedCi];

fn demo_config(out: &Path) -> Result<PipelineConfig> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/demo.toml");
    let mut cfg = PipelineConfig::load(&path)?;
    cfg.out = out.to_path_buf();
    Ok(cfg)
}

/// Indeterminate fractions column of a sweep CSV, in grid order.
fn sweep_indeterminate(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "indeterminate_fraction")
        .context("sweep CSV has no indeterminate_fraction column")?;
    r.records()
        .map(|rec| Ok(rec?[col].parse::<f64>()?))
        .collect()
}

pub fn end_to_end() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let mut cfg = demo_config(dir.path())?;
    cfg.slides.train_slides = 3;
    cfg.slides.test_slides = 2;
    let report = run(&Command::Pipeline, &cfg)?;
    let summary = report.metrics.context("pipeline produced no metrics")?;
    ensure!(summary.class_count == 4, "summary is {}-class", summary.class_count);

    let mut lines = Vec::new();
    let mut op = BTreeMap::new();
    for m in METHODS {
        let ms = summary.method(m).with_context(|| format!("no `{m}` results"))?;
        let four = ms.classes(4).context("no 4-class result")?;
        let two = ms.classes(2).context("no 2-class result")?;
        ensure!(four.accuracy >= 0.90, "{m}: 4-class accuracy {:.4} at θ = 0", four.accuracy);
        ensure!(two.accuracy >= 0.95, "{m}: 2-class accuracy {:.4} at θ = 0", two.accuracy);

        let ind = sweep_indeterminate(&cfg.out.join("report").join(format!("sweep_{m}.csv")))?;
        ensure!(!ind.is_empty(), "{m}: empty sweep");
        if let Some(i) = ind.windows(2).position(|w| w[1] < w[0]) {
            bail!("{m}: indeterminate fraction falls from {} to {} at grid row {}", ind[i], ind[i + 1], i + 1);
        }

        let acc = four
            .operating_point
            .and_then(|p| p.accuracy)
            .with_context(|| format!("{m}: no accuracy at the {} indeterminate point", summary.target_indeterminate_rate))?;
        op.insert(m.name(), acc);
        lines.push(format!("{m} {:.3}/{:.3}", four.accuracy, two.accuracy));
    }
    let all = op[Method::AllScans.name()];
    for m in [Method::MaxCi, Method::WeightedCi] {
        ensure!(
            op[m.name()] >= all,
            "{m} accuracy {:.4} at the operating point is below all-scans {all:.4}",
            op[m.name()]
        );
    }
    Ok(format!(
        "{} test cores, 4/2-class accuracy {}; sweeps monotone; operating point {}",
        summary.cores,
        lines.join(", "),
        op.iter().map(|(k, v)| format!("{k} {v:.3}")).collect::<Vec<_>>().join(", ")
    ))
}

/// Every file under `root`, keyed by its relative path. Run reports are
/// left out since they hold wall-clock timings and the run directory.
fn tree(root: &Path) -> Result<BTreeMap<PathBuf, PathBuf>> {
    let mut out = BTreeMap::new();
    let mut todo = vec![root.to_path_buf()];
    while let Some(d) = todo.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                todo.push(p);
            } else if !p.file_name().unwrap().to_string_lossy().starts_with("run_report") {
                out.insert(p.strip_prefix(root)?.to_path_buf(), p);
            }
        }
    }
    Ok(out)
}

fn has_ext(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e == ext)
}

fn random_raster(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Result<Raster> {
    let data = (0..w * h * 3).map(|_| rng.gen()).collect();
    Ok(Raster::new(w, h, rng.gen_range(0.1..3.0), data)?)
}

fn container_round_trips(run_dir: &Path, scratch: &Path) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC9);
    let mut checked = 0;
    for case in 0..5 {
        let (w, h) = (rng.gen_range(1..64), rng.gen_range(1..48));
        let n = rng.gen_range(1..12);
        let frames: Vec<Raster> = (0..n).map(|_| random_raster(&mut rng, w, h)).collect::<Result<_>>()?;
        let manifest = FrameManifest {
            frame_count: n,
            width: w,
            height: h,
            frame_period_s: 1.0 / rng.gen_range(1.0..120.0),
            exposure_s: 0.0,
            scale_um_per_px: frames[0].scale(),
            trajectory: None,
        };
        let dir = scratch.join(format!("seq{case}"));
        write_sequence(&dir, &manifest, &frames)?;
        let back = read_sequence(&dir)?;
        ensure!(back.manifest == manifest, "sequence {case}: manifest changed on reread");
        for (i, (a, b)) in frames.iter().zip(&back.frames).enumerate() {
            ensure!(a.data() == b.data(), "sequence {case}: frame {i} changed on reread");
        }
        checked += 1;
    }

    // rewrite what the pipeline wrote and compare the bytes
    for (rel, path) in tree(run_dir)? {
        let copy = scratch.join("rewrite").join(&rel);
        let same = |a: &Path, b: &Path| -> Result<bool> { Ok(std::fs::read(a)? == std::fs::read(b)?) };
        let side = |p: &Path| -> PathBuf {
            if has_ext(p, "stack") {
                PathBuf::from(format!("{}.json", p.display()))
            } else {
                p.with_extension("json")
            }
        };
        if has_ext(&path, "raw") {
            write_raster(&copy, &read_raster(&path)?)?;
        } else if has_ext(&path, "stack") {
            std::fs::create_dir_all(copy.parent().unwrap())?;
            PatchStack::read(&path)?.write(&copy)?;
        } else {
            continue;
        }
        ensure!(
            same(&path, &copy)? && same(&side(&path), &side(&copy))?,
            "{} is not reproduced byte for byte by a read and write",
            rel.display()
        );
        checked += 1;
    }
    Ok(checked)
}

pub fn determinism() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&Command::Pipeline, &demo_config(&a)?)?;
    run(&Command::Pipeline, &demo_config(&b)?)?;
    let (ta, tb) = (tree(&a)?, tree(&b)?);
    ensure!(
        ta.keys().eq(tb.keys()),
        "the two runs wrote different file sets ({} vs {} files)",
        ta.len(),
        tb.len()
    );
    let mut by_ext: BTreeMap<String, usize> = BTreeMap::new();
    for (rel, pa) in &ta {
        ensure!(
            std::fs::read(pa)? == std::fs::read(&tb[rel])?,
            "{} differs between the runs",
            rel.display()
        );
        let ext = rel.extension().map_or("other".into(), |e| e.to_string_lossy().into_owned());
        *by_ext.entry(ext).or_default() += 1;
    }
    ensure!(by_ext.contains_key("csv") && by_ext.contains_key("raw"), "runs wrote no CSVs or mosaics");
    let containers = container_round_trips(&a, &dir.path().join("scratch"))?;
    Ok(format!(
        "two seeded runs byte-identical over {} files ({}); {containers} container round trips bit-exact",
        ta.len(),
        by_ext.iter().map(|(k, v)| format!("{v} {k}")).collect::<Vec<_>>().join(", ")
    ))
}
