//! Acceptance suite. Runs every criterion concurrently, prints one PASS/FAIL line per
//! criterion in order and exits non-zero if any fails.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use pdlayout::adapt::gradcheck::{adjoint_mismatch, check_all};
use pdlayout::adapt::{demo_split, train_adversarial, train_pd_only, PdNet, PdNetConfig, SyntheticDomainConfig, TrainConfig, TrainRun};
use pdlayout::graphic::{r_ali, r_ove, r_und};
use pdlayout::losses::{generator_targets, hungarian, l_pd, l_pd_gen, smooth_one_target, total_generator_loss, Domain, LossWeights, PixelMapBatch};
use pdlayout::perceptual::{fid_pipeline, FeatureSet, DEFAULT_FRECHET_EPS};
use pdlayout::raster::make_white_patch_map;
use pdlayout::{BBox, Element, ElementKind, Layout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const KINDS: [ElementKind; 4] = [ElementKind::Logo, ElementKind::Text, ElementKind::Underlay, ElementKind::Embellishment];

fn random_grid_layout(rng: &mut ChaCha8Rng, grid: usize) -> Layout {
    let n = rng.random_range(0..=8);
    let elements = (0..n)
        .map(|_| {
            let w = rng.random_range(1..=grid / 2);
            let h = rng.random_range(1..=grid / 2);
            let x = rng.random_range(0..=grid - w);
            let y = rng.random_range(0..=grid - h);
            let g = grid as f64;
            let bbox = BBox::new(x as f64 / g, y as f64 / g, w as f64 / g, h as f64 / g).unwrap();
            Element::new(KINDS[rng.random_range(0..4)], bbox)
        })
        .collect();
    Layout::new(elements).unwrap()
}

/// Cell set of a grid-snapped box on a `grid × grid` raster.
fn cells(b: &BBox, grid: usize) -> Vec<bool> {
    let g = grid as f64;
    let (x0, y0) = ((b.x * g).round() as usize, (b.y * g).round() as usize);
    let (x1, y1) = (((b.x + b.w) * g).round() as usize, ((b.y + b.h) * g).round() as usize);
    (0..grid * grid)
        .map(|i| (x0..x1).contains(&(i % grid)) && (y0..y1).contains(&(i / grid)))
        .collect()
}

fn count(a: &[bool], b: Option<&[bool]>) -> usize {
    match b {
        None => a.iter().filter(|&&v| v).count(),
        Some(b) => a.iter().zip(b).filter(|(&x, &y)| x && y).count(),
    }
}

fn raster_r_ove(layout: &Layout, grid: usize) -> f64 {
    let groups: [&[ElementKind]; 2] = [&[ElementKind::Logo, ElementKind::Text], &[ElementKind::Embellishment]];
    let mut total = 0.0;
    for group in groups {
        let masks: Vec<Vec<bool>> = layout.elements().iter().filter(|e| group.contains(&e.kind)).map(|e| cells(&e.bbox, grid)).collect();
        for (i, a) in masks.iter().enumerate() {
            for (j, b) in masks.iter().enumerate() {
                if i != j {
                    total += count(a, Some(b)) as f64 / count(a, None) as f64;
                }
            }
        }
    }
    total
}

fn raster_r_und(layout: &Layout, grid: usize) -> Option<f64> {
    let others: Vec<Vec<bool>> = layout.elements().iter().filter(|e| e.kind != ElementKind::Underlay).map(|e| cells(&e.bbox, grid)).collect();
    let per: Vec<f64> = layout
        .elements()
        .iter()
        .filter(|e| e.kind == ElementKind::Underlay)
        .map(|u| {
            let m = cells(&u.bbox, grid);
            others.iter().map(|o| count(&m, Some(o)) as f64 / count(&m, None) as f64).fold(0.0, f64::max)
        })
        .collect();
    (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64)
}

fn geometry_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst, mut with_underlay) = (0.0f64, 0);
    for i in 0..200 {
        let layout = random_grid_layout(&mut rng, 64);
        let d = (r_ove(&layout) - raster_r_ove(&layout, 64)).abs();
        check!(d <= 1e-9, "layout {i}: R_ove differs by {d:e}");
        worst = worst.max(d);
        match (r_und(&layout), raster_r_und(&layout, 64)) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                check!((a - b).abs() <= 1e-9, "layout {i}: R_und {a} vs raster {b}");
                worst = worst.max((a - b).abs());
                with_underlay += 1;
            }
            (a, b) => return Err(format!("layout {i}: R_und presence differs ({a:?} vs {b:?})")),
        }
    }
    let t = start.elapsed();
    check!(t < Duration::from_secs(5), "took {t:?}");
    Ok(format!("200 layouts ({with_underlay} with underlays), max deviation {worst:e}, {t:.2?}"))
}

fn alignment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let n = rng.random_range(0..=8);
        let elements: Vec<Element> = (0..n)
            .map(|_| {
                let (w, h) = (rng.random_range(0.01..0.5), rng.random_range(0.01..0.5));
                let bbox = BBox::new(rng.random_range(0.0..1.0 - w), rng.random_range(0.0..1.0 - h), w, h).unwrap();
                Element::new(KINDS[rng.random_range(0..4)], bbox)
            })
            .collect();
        let layout = Layout::new(elements.clone()).unwrap();
        let anchor = |b: &BBox| [b.x, b.x + b.w / 2.0, b.x + b.w, b.y, b.y + b.h / 2.0, b.y + b.h];
        // Every (element, other element, anchor) distance, then the per-element minimum.
        let mut best: HashMap<usize, f64> = HashMap::new();
        for (a, ea) in elements.iter().enumerate() {
            for (b, eb) in elements.iter().enumerate() {
                for k in 0..6 {
                    if a != b {
                        let d = (anchor(&ea.bbox)[k] - anchor(&eb.bbox)[k]).abs();
                        let e = best.entry(a).or_insert(f64::INFINITY);
                        *e = e.min(d);
                    }
                }
            }
        }
        let expected = if n < 2 { 0.0 } else { best.values().sum::<f64>() / n as f64 };
        let d = (r_ali(&layout) - expected).abs();
        check!(d <= 1e-12, "layout {i}: R_ali differs by {d:e}");
        worst = worst.max(d);
    }
    Ok(format!("200 layouts, max deviation {worst:e}"))
}

fn brute_force(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == cost.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.min(cost[row][c] + go(cost, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(cost, 0, &mut vec![false; cost[0].len()])
}

fn hungarian_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut rectangular = 0;
    for i in 0..1000 {
        let cols = rng.random_range(1..=6);
        let rows = rng.random_range(1..=cols);
        rectangular += usize::from(rows != cols);
        // Integer costs keep every sum exact whatever the summation order.
        let cost: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0..100) as f64).collect()).collect();
        let m = hungarian(&cost).map_err(|e| e.to_string())?;
        let brute = brute_force(&cost);
        check!(m.cost == brute, "matrix {i}: {} vs brute force {brute}", m.cost);
        let recomputed: f64 = m.assignment.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        check!(recomputed == m.cost, "matrix {i}: assignment sums to {recomputed}, reported {}", m.cost);
        let mut cols_used = m.assignment.clone();
        cols_used.sort_unstable();
        cols_used.dedup();
        check!(cols_used.len() == rows, "matrix {i}: assignment is not injective");
    }
    Ok(format!("1000 matrices up to 6x6 ({rectangular} rectangular), all exact"))
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

fn frechet_closed_forms() -> Outcome {
    let e = |r: pdlayout::Result<f64>| r.map_err(|e| e.to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let x = FeatureSet::from_rows(&gaussian_rows(&mut rng, 200, 4)).unwrap();
    let self_fid = e(fid_pipeline(&x, &x, 1e-6))?;
    check!(self_fid.abs() <= 1e-6, "FID(X, X) = {self_fid:e}");

    // Unbiased fits: mean 0, variance 1 against mean 1, variance 4.
    let column = |v: &[f64]| FeatureSet::from_rows(&v.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap();
    let closed = e(fid_pipeline(&column(&[-1.0, 0.0, 1.0]), &column(&[-1.0, 1.0, 3.0]), DEFAULT_FRECHET_EPS))?;
    check!((closed - 2.0).abs() <= 1e-6, "1-D fixture gives {closed}");

    let real_rows = gaussian_rows(&mut rng, 500, 4);
    let shifted: Vec<Vec<f64>> = real_rows.iter().map(|r| {
        let mut r = r.clone();
        r[0] += 1.0;
        r
    }).collect();
    let real = FeatureSet::from_rows(&real_rows).unwrap();
    let shifted_fid = e(fid_pipeline(&real, &FeatureSet::from_rows(&shifted).unwrap(), DEFAULT_FRECHET_EPS))?;
    check!((shifted_fid - 1.0).abs() <= 0.15, "shifted fixture gives {shifted_fid}");
    Ok(format!("FID(X,X) = {self_fid:.1e}, 1-D fixture {closed:.9}, shifted fixture {shifted_fid:.6}"))
}

fn gradient_checks() -> Outcome {
    let mut worst = (String::new(), 0.0f64);
    let mut n = 0;
    for seed in [11, 12, 13] {
        for c in check_all(seed).map_err(|e| e.to_string())? {
            check!(c.relative_error <= 1e-4, "seed {seed}, {}: relative error {:e}", c.name, c.relative_error);
            if c.relative_error > worst.1 {
                worst = (c.name, c.relative_error);
            }
            n += 1;
        }
    }
    let adjoint = (0..4).map(adjoint_mismatch).collect::<pdlayout::Result<Vec<f64>>>().map_err(|e| e.to_string())?;
    let adjoint = adjoint.into_iter().fold(0.0f64, f64::max);
    check!(adjoint <= 1e-10, "adjoint identity off by {adjoint:e}");
    Ok(format!("{n} comparisons, worst {:e} ({}), adjoint mismatch {adjoint:.1e}", worst.1, worst.0))
}

fn pd_learns_masks() -> Outcome {
    let start = Instant::now();
    let (train, held) = demo_split(&SyntheticDomainConfig::default(), 32).map_err(|e| e.to_string())?;
    check!(train.source.len() == 256, "expected 256 training pairs");
    let cfg = TrainConfig::default();
    check!(cfg.steps == 500, "default steps are {}", cfg.steps);
    let run = train_pd_only(&train, &held, &cfg, &PdNetConfig::default()).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let first = run.trace[0].auc.unwrap_or(f64::NAN);
    check!(run.final_auc >= 0.9, "held-out AUC {:.4}", run.final_auc);
    check!(t < Duration::from_secs(600), "took {t:?}");
    Ok(format!("held-out pixel AUC {first:.3} -> {:.4} after 500 steps, {t:.1?}", run.final_auc))
}

fn same_run(a: &TrainRun, b: &TrainRun) -> bool {
    a.trace.len() == b.trace.len()
        && a.trace.iter().zip(&b.trace).all(|(x, y)| {
            x.step == y.step
                && x.l_pd.to_bits() == y.l_pd.to_bits()
                && x.l_pd_gen.to_bits() == y.l_pd_gen.to_bits()
                && x.gap.to_bits() == y.gap.to_bits()
                && x.auc.map(f64::to_bits) == y.auc.map(f64::to_bits)
        })
        && a.trace_jsonl() == b.trace_jsonl()
        && a.final_gap.to_bits() == b.final_gap.to_bits()
}

fn domain_gap_reduction() -> Outcome {
    let (train, held) = demo_split(&SyntheticDomainConfig::default(), 32).map_err(|e| e.to_string())?;
    let cfg = |gamma: f64| TrainConfig {
        weights: LossWeights { gamma, ..LossWeights::default() },
        ..TrainConfig::default()
    };
    let runs: Vec<pdlayout::Result<TrainRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = [0.0, 0.0, 6.0, 6.0]
            .into_iter()
            .map(|g| {
                let (train, held) = (&train, &held);
                s.spawn(move || train_adversarial(train, held, &cfg(g), &PdNetConfig::default()))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread")).collect()
    });
    let runs = runs.into_iter().collect::<pdlayout::Result<Vec<_>>>().map_err(|e| e.to_string())?;
    let (base, adv) = (&runs[0], &runs[2]);
    check!(same_run(&runs[0], &runs[1]), "gamma 0 replay differs");
    check!(same_run(&runs[2], &runs[3]), "gamma 6 replay differs");
    check!(base.initial_gap == adv.initial_gap, "runs start from different extractors");
    let reduction = 1.0 - adv.final_gap / base.final_gap;
    check!(reduction >= 0.3, "gap {:.4} vs baseline {:.4}: reduction {:.1}%", adv.final_gap, base.final_gap, 100.0 * reduction);
    Ok(format!(
        "feature gap {:.4} (gamma 0) vs {:.4} (gamma 6): {:.1}% reduction; both traces replay bit-for-bit",
        base.final_gap,
        adv.final_gap,
        100.0 * reduction
    ))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pdlayout")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("pdlayout {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn defaults_and_echo() -> Outcome {
    let w = LossWeights::default();
    check!(w.alpha == 2.0 && w.beta == 1.0 && w.gamma == 6.0, "loss weights {w:?}");
    check!(w.smoothing_low == 0.2, "smoothing {}", w.smoothing_low);
    let layout = Layout::new(vec![Element::new(ElementKind::Text, BBox::new(0.0, 0.0, 0.5, 1.0).unwrap())]).unwrap();
    let smoothed = smooth_one_target(&make_white_patch_map(&layout, 2, 1).unwrap(), w.smoothing_low).map_err(|e| e.to_string())?;
    check!(smoothed == vec![1.0, 0.2], "smoothing maps [1, 0] to {smoothed:?}");

    let pd = PdNet::new(&PdNetConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
    let params = pd.param_count();
    check!(params < 350_000, "default discriminator has {params} parameters");

    let dir = fixtures().join("corpus");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reports: Vec<Value> = [
        run_cli(&dir, &["eval-graphic", "--annotations", "annotations.json"])?,
        run_cli(&dir, &["eval-content", "--annotations", "annotations.json", "--provider", "downsample"])?,
        run_cli(tmp.path(), &["train-pd-demo", "--steps", "2"])?,
    ]
    .iter()
    .map(|s| serde_json::from_str(s).map_err(|e| e.to_string()))
    .collect::<Result<_, _>>()?;
    for r in &reports {
        let echo = &r["config"]["weights"];
        let got = ["alpha", "beta", "gamma", "smoothing_low"].map(|k| echo[k].as_f64());
        check!(got == [Some(2.0), Some(1.0), Some(6.0), Some(0.2)], "{} echoes {echo}", r["command"]);
    }
    let echoed = reports[2]["config"]["pd_param_count"].as_u64();
    check!(echoed == Some(params as u64), "demo echoes {echoed:?} parameters, expected {params}");
    Ok(format!("alpha 2, beta 1, gamma 6, smoothing 0 -> 0.2 in defaults and 3 report echoes; discriminator {params} parameters"))
}

fn loss_behavior() -> Outcome {
    let w = LossWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let e = |r: pdlayout::Result<pdlayout::losses::PdLoss>| r.map(|l| l.total()).map_err(|e| e.to_string());
    for trial in 0..100 {
        let mut targets = PixelMapBatch::new(4, 4);
        for d in [Domain::Source, Domain::Source, Domain::Target] {
            let t = (0..16).map(|_| if d == Domain::Source && rng.random_bool(0.4) { 1.0 } else { 0.2 }).collect();
            targets.push(d, t).map_err(|e| e.to_string())?;
        }
        check!(e(l_pd(&targets, &targets, &w))? == 0.0, "trial {trial}: perfect prediction has nonzero loss");
        let mut off = PixelMapBatch::new(4, 4);
        let k = rng.random_range(0..48);
        for (i, (d, t)) in targets.maps().iter().enumerate() {
            let mut t = t.clone();
            if k / 16 == i {
                t[k % 16] += rng.random_range(-0.15..0.15f64).max(1e-3);
            }
            off.push(*d, t).map_err(|e| e.to_string())?;
        }
        check!(e(l_pd(&off, &targets, &w))? > 0.0, "trial {trial}: one wrong pixel has zero loss");
    }
    let mut preds = PixelMapBatch::new(3, 2);
    preds.push(Domain::Source, vec![0.2; 6]).map_err(|e| e.to_string())?;
    preds.push(Domain::Target, vec![0.2; 6]).map_err(|e| e.to_string())?;
    check!(generator_targets(&preds, &w) == preds, "generator targets differ from the uniform 0.2 maps");
    let gen = e(l_pd_gen(&preds, &w))?;
    check!(gen == 0.0, "l_pd_gen = {gen}");
    let total = total_generator_loss(1.0, 0.5, &w);
    check!(total == 4.0, "total_generator_loss(1, 0.5) = {total}");
    Ok("l_pd zero exactly at perfect prediction (100 trials); l_pd_gen 0; total generator loss 4.0".into())
}

fn golden_reports() -> Outcome {
    let dir = fixtures().join("corpus");
    let cases: [(&[&str], &str); 2] = [
        (&["eval-graphic", "--annotations", "annotations.json"], "eval_graphic.json"),
        (&["eval-content", "--annotations", "annotations.json", "--provider", "downsample:8"], "eval_content.json"),
    ];
    for (args, golden) in cases {
        let expected = std::fs::read_to_string(fixtures().join("golden").join(golden)).map_err(|e| e.to_string())?;
        for workers in ["1", "4"] {
            let got = run_cli(&dir, &[args, &["--workers", workers]].concat())?;
            check!(got == expected, "{golden} with {workers} workers differs from the checked-in report");
        }
    }
    Ok("eval-graphic and eval-content match the checked-in JSON byte for byte (1 and 4 workers)".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("geometry oracle", geometry_oracle),
        ("alignment oracle", alignment_oracle),
        ("hungarian oracle", hungarian_oracle),
        ("frechet closed forms", frechet_closed_forms),
        ("gradient checks", gradient_checks),
        ("discriminator learns inpainting masks", pd_learns_masks),
        ("domain-gap reduction", domain_gap_reduction),
        ("loss constants and config echo", defaults_and_echo),
        ("loss behavior", loss_behavior),
        ("golden reports", golden_reports),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(f)).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| {
                let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
                Err(format!("panicked: {}", msg.unwrap_or_default()))
            }))
            .collect()
    });
    let mut failed = 0;
    for (i, ((name, _), result)) in criteria.iter().zip(&results).enumerate() {
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
