//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails. Pass criterion ids (`c3`, `C10`) as
//! arguments to run a subset.

mod coreprep;
mod imaging;
mod pipeline;
mod stitching;
mod triage;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

type Check = fn() -> anyhow::Result<String>;

struct Criterion {
    id: &'static str,
    title: &'static str,
    /// Wall-clock budget in seconds, where one is stated.
    budget_s: Option<f64>,
    run: Check,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: "C1",
        title: "blur model matches temporal-shift oracle",
        budget_s: Some(30.0),
        run: imaging::blur_equivalence,
    },
    Criterion {
        id: "C2",
        title: "rendered scan matches sub-exposure oracle",
        budget_s: Some(60.0),
        run: imaging::render_commutativity,
    },
    Criterion {
        id: "C3",
        title: "stitch round trip",
        budget_s: Some(120.0),
        run: stitching::round_trip,
    },
    Criterion {
        id: "C4",
        title: "square-wave repair of a featureless band",
        budget_s: None,
        run: stitching::square_wave_repair,
    },
    Criterion {
        id: "C5",
        title: "segmentation and labeling exactness",
        budget_s: None,
        run: coreprep::segmentation_exactness,
    },
    Criterion {
        id: "C6",
        title: "triage arithmetic against brute force",
        budget_s: None,
        run: triage::triage_arithmetic,
    },
    Criterion {
        id: "C7",
        title: "AUC equals pairwise concordance",
        budget_s: None,
        run: triage::auc_oracle,
    },
    Criterion {
        id: "C8",
        title: "end-to-end synthetic classification",
        budget_s: None,
        run: pipeline::end_to_end,
    },
    Criterion {
        id: "C9",
        title: "determinism and container round trips",
        budget_s: None,
        run: pipeline::determinism,
    },
    Criterion {
        id: "C10",
        title: "2000-frame 640x480 stitch throughput",
        // the 60 s limit covers reading and stitching, checked inside
        budget_s: None,
        run: stitching::throughput,
    },
];

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_ascii_uppercase())
        .collect();
    // panics are reported on the criterion line instead
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == c.id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run));
        let secs = start.elapsed().as_secs_f64();
        let outcome = match result {
            Ok(Ok(detail)) => match c.budget_s {
                Some(b) if secs > b => Err(format!("{detail}; took {secs:.1} s, budget {b:.0} s")),
                _ => Ok(detail),
            },
            Ok(Err(e)) => Err(format!("{e:#}")),
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{:<4} {tag}  {} [{secs:.1} s]: {detail}", c.id, c.title);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
