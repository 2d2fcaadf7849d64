//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

// the oracles below are plain index loops on purpose
#![allow(clippy::needless_range_loop)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsdl_core::data::{
    decode_fmat, encode_fmat, load_checkpoint, read_glove, read_labels, save_checkpoint,
    synth_generate, write_labels, LabelTable, SynthConfig,
};
use dsdl_core::diffcore::GradCheckConfig;
use dsdl_core::metrics::{average_precision, prf_suite, ApConvention};
use dsdl_core::model::{apus_train, Architecture, FeatureSpec, Hyper, ToyProblem, TOY_FEATURES};
use dsdl_core::represent::{backward_codes, solve_codes, CodeUpstream, GradMode};
use dsdl_core::semdict::SemanticDictionary;
use dsdl_core::{Error, Matrix};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    if took < limit {
        Ok(took)
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

// ---------------------------------------------------------------- 1

/// `‖f − Dα‖² + λ‖α‖²` for a single column, by plain loops.
fn ridge_objective(d: &Matrix, f: &[f64], alpha: &[f64], lambda: f64) -> f64 {
    let (rows, cols) = d.shape();
    let mut loss = 0.0;
    for i in 0..rows {
        let mut r = f[i];
        for j in 0..cols {
            r -= d.get(i, j) * alpha[j];
        }
        loss += r * r;
    }
    loss + lambda * alpha.iter().map(|a| a * a).sum::<f64>()
}

fn closed_form() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = rng.gen_range(2..=16);
        let d = rng.gen_range(c + 1..=64);
        let lambda = [0.1, 1.0, 10.0][seed as usize % 3];
        let dm = random(&mut rng, d, c);
        let f = random(&mut rng, d, 1);
        let dict = SemanticDictionary::new(dm.clone()).map_err(|e| e.to_string())?;
        let alpha = solve_codes(&dict, &f, lambda).map_err(|e| e.to_string())?.alpha.col(0);
        let fv = f.col(0);

        // normal equations (DᵀD + λI)α − Dᵀf, by plain loops
        let mut resid = 0.0;
        let mut dtf_sq = 0.0;
        for a in 0..c {
            let dtf: f64 = (0..d).map(|i| dm.get(i, a) * fv[i]).sum();
            let mut row = lambda * alpha[a] - dtf;
            for b in 0..c {
                let g: f64 = (0..d).map(|i| dm.get(i, a) * dm.get(i, b)).sum();
                row += g * alpha[b];
            }
            resid += row * row;
            dtf_sq += dtf * dtf;
        }
        let (resid, bound) = (resid.sqrt(), 1e-8 * (1.0 + dtf_sq.sqrt()));
        if resid > bound {
            return Err(format!("instance {seed}: residual {resid:e} > {bound:e}"));
        }
        worst = worst.max(resid / bound);

        let best = ridge_objective(&dm, &fv, &alpha, lambda);
        for t in 0..100 {
            let dir: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let r = 0.1 * rng.gen::<f64>();
            let moved: Vec<f64> = alpha.iter().zip(&dir).map(|(a, v)| a + r * v / norm).collect();
            if ridge_objective(&dm, &fv, &moved, lambda) < best {
                return Err(format!("instance {seed}: perturbation {t} lowers the loss"));
            }
        }
    }
    let took = within(start, Duration::from_secs(5))?;
    Ok(format!("200 instances, worst residual/bound {worst:.2e}, {took:.2?}"))
}

// ---------------------------------------------------------------- 2

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let hyper = Hyper {
        grad_mode: GradMode::Full,
        ..Hyper::voc()
    };
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let mut toy = ToyProblem::new(seed, TOY_FEATURES).map_err(|e| e.to_string())?;
        let report = toy
            .grad_check(&hyper, &GradCheckConfig::default())
            .map_err(|e| e.to_string())?;
        if !report.passed() || report.blocks.len() != 8 {
            return Err(format!("seed {seed}:\n{report}"));
        }
        worst = worst.max(report.max_rel_error());
    }
    let took = within(start, Duration::from_secs(30))?;
    Ok(format!("8 blocks x 3 seeds, worst rel error {worst:.2e}, {took:.2?}"))
}

// ---------------------------------------------------------------- 3

fn max_abs(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn envelope() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let c = rng.gen_range(2..=8);
        let d = rng.gen_range(c + 1..=24);
        let b = rng.gen_range(1..=8);
        let lambda = 10f64.powf(rng.gen_range(-2.0..2.0));
        let dict = SemanticDictionary::new(random(&mut rng, d, c)).map_err(|e| e.to_string())?;
        let f = random(&mut rng, d, b);
        let codes = solve_codes(&dict, &f, lambda).map_err(|e| e.to_string())?;
        let up = CodeUpstream {
            codes: Matrix::zeros(c, b),
            dic_weight: rng.gen_range(0.1..2.0),
        };
        let full = backward_codes(&codes, &up, GradMode::Full).map_err(|e| e.to_string())?;
        let det = backward_codes(&codes, &up, GradMode::DicDetached).map_err(|e| e.to_string())?;
        let diff = max_abs(&full.dictionary, &det.dictionary).max(max_abs(&full.features, &det.features));
        if diff > 1e-8 {
            return Err(format!("instance {seed}: modes differ by {diff:e}"));
        }
        worst = worst.max(diff);
    }
    Ok(format!("50 instances, worst |full - dic_detached| {worst:.2e}"))
}

// ---------------------------------------------------------------- 4, 6, 7 helpers

fn dsdl(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dsdl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "dsdl {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

const DESK_MODULE: &str = "feature_module=mlp:64:64";
const DESK_HIDDEN: &str = "ae_hidden=32";

fn desk_arch() -> Architecture {
    Architecture {
        features: FeatureSpec::Mlp {
            hidden: 64,
            out_dim: 64,
        },
        hidden: 32,
    }
}

fn planted_config() -> SynthConfig {
    SynthConfig {
        feature_dim: 64,
        classes: 8,
        samples: 512,
        holdout: 128,
        noise_sigma: 0.05,
        seed: 0,
        ..SynthConfig::default()
    }
}

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().expect("temp dir");
        let root = tmp.path().to_path_buf();
        Workspace { _tmp: tmp, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn synth(&self) -> Result<(), String> {
        let c = planted_config();
        dsdl(&[
            "synth",
            "--dim", &c.feature_dim.to_string(),
            "--classes", &c.classes.to_string(),
            "--samples", &c.samples.to_string(),
            "--holdout", &c.holdout.to_string(),
            "--noise", &c.noise_sigma.to_string(),
            "--seed", &c.seed.to_string(),
            "--output", p(&self.path("data")),
        ])
        .map(|_| ())
    }

    fn train(&self, ck: &str) -> Result<(), String> {
        dsdl(&[
            "train",
            "--preset", "voc",
            "--seed", "0",
            "--set", DESK_MODULE,
            "--set", DESK_HIDDEN,
            "--features", p(&self.path("data/features.fmat")),
            "--labels", p(&self.path("data/labels.csv")),
            "--embeddings", p(&self.path("data/embeddings.txt")),
            "--checkpoint", p(&self.path(ck)),
        ])
        .map(|_| ())
    }

    fn eval(&self, ck: &str, split: &str, report: &str) -> Result<(f64, f64), String> {
        dsdl(&[
            "eval",
            "--checkpoint", p(&self.path(ck)),
            "--features", p(&self.path(&format!("data/{split}features.fmat"))),
            "--labels", p(&self.path(&format!("data/{split}labels.csv"))),
            "--report", p(&self.path(report)),
        ])?;
        let csv = fs::read_to_string(self.path(report).join("metrics.csv")).map_err(|e| e.to_string())?;
        let field = |section: &str, name: &str| {
            csv.lines()
                .find_map(|l| {
                    let mut it = l.splitn(3, ',');
                    (it.next() == Some(section) && it.next() == Some(name))
                        .then(|| it.next().and_then(|v| v.parse::<f64>().ok()))
                        .flatten()
                })
                .ok_or_else(|| format!("{section},{name} missing from report"))
        };
        Ok((field("summary", "mAP")?, field("threshold0.5", "CF1")?))
    }
}

fn planted_recovery(ws: &Workspace) -> Outcome {
    let start = Instant::now();
    ws.synth()?;
    ws.train("ck")?;
    let (map, cf1) = ws.eval("ck", "", "report_train")?;
    let (hmap, _) = ws.eval("ck", "holdout_", "report_holdout")?;
    let took = within(start, Duration::from_secs(180))?;
    let summary = format!("train mAP {map:.4} CF1 {cf1:.4}, holdout mAP {hmap:.4}, {took:.2?}");
    if map >= 0.95 && cf1 >= 0.90 && hmap >= 0.90 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---------------------------------------------------------------- 5

fn scalar_prf(a: &[Vec<bool>], t: &[Vec<bool>]) -> [f64; 6] {
    let c = a.len();
    let (mut nt, mut np, mut ng, mut cp, mut cr) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for j in 0..c {
        let (mut tj, mut pj, mut gj) = (0.0, 0.0, 0.0);
        for s in 0..a[j].len() {
            if a[j][s] {
                pj += 1.0;
            }
            if t[j][s] {
                gj += 1.0;
            }
            if a[j][s] && t[j][s] {
                tj += 1.0;
            }
        }
        nt += tj;
        np += pj;
        ng += gj;
        if pj > 0.0 {
            cp += tj / pj;
        }
        if gj > 0.0 {
            cr += tj / gj;
        }
    }
    let div = |x: f64, y: f64| if y > 0.0 { x / y } else { 0.0 };
    let f1 = |p: f64, r: f64| div(2.0 * p * r, p + r);
    let (op, or, cp, cr) = (div(nt, np), div(nt, ng), cp / c as f64, cr / c as f64);
    [op, or, f1(op, or), cp, cr, f1(cp, cr)]
}

/// Area under the stepwise PR curve, cutting after every rank.
fn brute_force_ap(scores: &[f64], rel: &[bool]) -> f64 {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    // bubble sort: descending score, ascending index on ties
    for i in 0..n {
        for j in 0..n - 1 - i {
            let (x, y) = (order[j], order[j + 1]);
            if scores[y] > scores[x] || (scores[y] == scores[x] && y < x) {
                order.swap(j, j + 1);
            }
        }
    }
    let total = rel.iter().filter(|&&r| r).count() as f64;
    let (mut area, mut last_recall) = (0.0, 0.0);
    for k in 1..=n {
        let tp = order[..k].iter().filter(|&&i| rel[i]).count() as f64;
        area += (tp / total - last_recall) * tp / k as f64;
        last_recall = tp / total;
    }
    area
}

fn to_matrix(rows: &[Vec<bool>]) -> Matrix {
    Matrix::from_fn(rows.len(), rows[0].len(), |r, s| if rows[r][s] { 1.0 } else { 0.0 })
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for inst in 0..100 {
        let c = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=30);
        let mut draw = || -> Vec<Vec<bool>> {
            (0..c).map(|_| (0..n).map(|_| rng.gen_bool(0.35)).collect()).collect()
        };
        let (a, t) = (draw(), draw());
        let got = prf_suite(&to_matrix(&a), &to_matrix(&t)).map_err(|e| e.to_string())?;
        let want = scalar_prf(&a, &t);
        let got = [got.op, got.or, got.of1, got.cp, got.cr, got.cf1];
        for (g, w) in got.iter().zip(want) {
            if (g - w).abs() > 1e-12 {
                return Err(format!("prf instance {inst}: {got:?} vs {want:?}"));
            }
        }
    }
    let mut ap_cases = 0;
    for inst in 0..300 {
        let n = rng.gen_range(1..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 7.0).collect();
        let rel: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let got = average_precision(&scores, &rel, ApConvention::AllPoints);
        match (got, rel.iter().any(|&r| r)) {
            (None, false) => {}
            (Some(ap), true) => {
                let want = brute_force_ap(&scores, &rel);
                if (ap - want).abs() > 1e-12 {
                    return Err(format!("AP instance {inst}: {ap} vs {want}"));
                }
                ap_cases += 1;
            }
            _ => return Err(format!("AP instance {inst}: definedness mismatch")),
        }
    }
    let b = |v: &[u8]| v.iter().map(|&x| x == 1).collect::<Vec<bool>>();
    let assigned = vec![b(&[1, 1, 1, 0]), b(&[1, 1, 0, 0])];
    let truth = vec![b(&[1, 1, 0, 0]), b(&[1, 0, 1, 1])];
    let w = prf_suite(&to_matrix(&assigned), &to_matrix(&truth)).map_err(|e| e.to_string())?;
    let cf1 = 2.0 * (7.0 / 12.0) * (2.0 / 3.0) / (7.0 / 12.0 + 2.0 / 3.0);
    let exact = (w.op - 0.6).abs() < 1e-15
        && (w.or - 0.6).abs() < 1e-15
        && (w.of1 - 0.6).abs() < 1e-15
        && (w.cp - 7.0 / 12.0).abs() < 1e-15
        && (w.cr - 2.0 / 3.0).abs() < 1e-15
        && (w.cf1 - cf1).abs() < 1e-15
        && (w.cf1 - 0.6222).abs() < 1e-4;
    if !exact {
        return Err(format!("worked example gave {w:?}"));
    }
    Ok(format!("100 PRF instances, {ap_cases} AP instances, worked example CF1 {:.4}", w.cf1))
}

// ---------------------------------------------------------------- 6

fn sensitivity() -> Outcome {
    let data = synth_generate(&planted_config()).map_err(|e| e.to_string())?;
    let run = |lambda: f64| -> Result<Option<f64>, String> {
        let hyper = Hyper {
            lambda,
            seed: 0,
            ..Hyper::voc()
        };
        match apus_train(&data.train, &desk_arch(), &hyper) {
            Ok(o) => Ok(Some(o.checkpoint.evaluate(&data.train).map_err(|e| e.to_string())?.map)),
            Err(Error::Divergence { .. }) => Ok(None),
            Err(e) => Err(e.to_string()),
        }
    };
    let small = run(1e-3)?.ok_or("lambda 1e-3 diverged")?;
    let suggested = run(10.0)?.ok_or("lambda 10 diverged")?;
    let large = run(1e4)?;
    let shown = |m: Option<f64>| m.map_or("diverged".to_string(), |v| format!("{v:.4}"));
    let summary = format!(
        "mAP(1e-3) {small:.6}, mAP(10) {suggested:.6}, mAP(1e4) {}",
        shown(large)
    );
    let collapses = large.is_none_or(|m| m <= suggested - 0.05);
    if suggested >= small && collapses {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---------------------------------------------------------------- 7

fn files_in(dir: &Path) -> Result<Vec<String>, String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    names.sort();
    Ok(names)
}

/// Byte comparison of two directories. `run.cfg` records the output path
/// itself, so only its other lines are compared.
fn same_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let (na, nb) = (files_in(a)?, files_in(b)?);
    if na != nb {
        return Err(format!("{na:?} vs {nb:?}"));
    }
    for n in &na {
        let (x, y) = (
            fs::read(a.join(n)).map_err(|e| e.to_string())?,
            fs::read(b.join(n)).map_err(|e| e.to_string())?,
        );
        let equal = if n == "run.cfg" {
            let strip = |v: &[u8]| -> Vec<String> {
                String::from_utf8_lossy(v)
                    .lines()
                    .filter(|l| !l.starts_with("checkpoint") && !l.starts_with("output") && !l.starts_with("report"))
                    .map(str::to_string)
                    .collect()
            };
            strip(&x) == strip(&y)
        } else {
            x == y
        };
        if !equal {
            return Err(format!("{} differs between {} and {}", n, a.display(), b.display()));
        }
    }
    Ok(na.len())
}

fn determinism(ws: &Workspace) -> Outcome {
    // checkpoints
    ws.train("ck_again")?;
    let ck_files = same_dirs(&ws.path("ck"), &ws.path("ck_again"))?;
    // reports
    ws.eval("ck_again", "", "report_again")?;
    same_dirs(&ws.path("report_train"), &ws.path("report_again"))?;
    // predictions
    for out in ["pred_a", "pred_b"] {
        dsdl(&[
            "predict",
            "--checkpoint", p(&ws.path("ck")),
            "--features", p(&ws.path("data/holdout_features.fmat")),
            "--output", p(&ws.path(out)),
        ])?;
    }
    same_dirs(&ws.path("pred_a"), &ws.path("pred_b"))?;

    // save/load preserves predictions bit for bit
    let ck = load_checkpoint(ws.path("ck")).map_err(|e| e.to_string())?;
    save_checkpoint(&ck, ws.path("ck_resaved")).map_err(|e| e.to_string())?;
    let back = load_checkpoint(ws.path("ck_resaved")).map_err(|e| e.to_string())?;
    let feats = dsdl_core::data::load_fmat(ws.path("data/holdout_features.fmat")).map_err(|e| e.to_string())?;
    let (pa, pb) = (
        ck.predict(&feats).map_err(|e| e.to_string())?,
        back.predict(&feats).map_err(|e| e.to_string())?,
    );
    if back != ck || pa.as_slice().iter().zip(pb.as_slice()).any(|(x, y)| x.to_bits() != y.to_bits()) {
        return Err("checkpoint reload changed predictions".into());
    }
    let probs = fs::read(ws.path("pred_a/probs.fmat")).map_err(|e| e.to_string())?;
    let written = decode_fmat(&probs, Path::new("probs.fmat")).map_err(|e| e.to_string())?;
    let narrowed = pa.map("f32", |v| v as f32 as f64).map_err(|e| e.to_string())?;
    if written != narrowed {
        return Err("predict output differs from in-memory predictions".into());
    }

    // every on-disk format round-trips
    for name in ["features.fmat", "codes.fmat", "dictionary.fmat", "holdout_features.fmat"] {
        let bytes = fs::read(ws.path("data").join(name)).map_err(|e| e.to_string())?;
        let m = decode_fmat(&bytes, Path::new(name)).map_err(|e| e.to_string())?;
        if encode_fmat(&m).map_err(|e| e.to_string())? != bytes {
            return Err(format!("{name} does not round-trip"));
        }
    }
    let labels_bytes = fs::read(ws.path("data/labels.csv")).map_err(|e| e.to_string())?;
    let table: LabelTable = read_labels(labels_bytes.as_slice(), Path::new("labels.csv")).map_err(|e| e.to_string())?;
    let mut rewritten = Vec::new();
    write_labels(&mut rewritten, &table).map_err(|e| e.to_string())?;
    if rewritten != labels_bytes {
        return Err("labels.csv does not round-trip".into());
    }
    let glove = fs::read(ws.path("data/embeddings.txt")).map_err(|e| e.to_string())?;
    let space = read_glove(glove.as_slice(), &table.class_names, Path::new("embeddings.txt")).map_err(|e| e.to_string())?;
    let planted = synth_generate(&planted_config()).map_err(|e| e.to_string())?;
    if space.embeddings() != &planted.planted.embeddings {
        return Err("embeddings.txt does not round-trip".into());
    }
    Ok(format!("{ck_files} checkpoint files identical; reports, predictions and formats round-trip"))
}

// ----------------------------------------------------------------

fn main() {
    let ws = Workspace::new();
    let criteria: Vec<Criterion> = vec![
        ("1 closed-form codes", Box::new(closed_form)),
        ("2 gradient fidelity", Box::new(gradient_fidelity)),
        ("3 envelope consistency", Box::new(envelope)),
        ("4 planted-model recovery", Box::new(|| planted_recovery(&ws))),
        ("5 metric oracles", Box::new(metric_oracles)),
        ("6 lambda sensitivity", Box::new(sensitivity)),
        ("7 determinism and round-trips", Box::new(|| determinism(&ws))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
