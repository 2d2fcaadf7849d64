//! Checkpoint directories and training-curve CSV.
//!
//! A checkpoint is a directory holding `manifest.txt` plus one FMAT file
//! per parameter and one for the frozen dictionary. Manifest lines are
//! tab-separated `key<TAB>value...`; parameter lines read
//! `param<TAB>name<TAB>ROWSxCOLS<TAB>file`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::fmat::{load_fmat, save_fmat};
use crate::diffcore::ParamStore;
use crate::error::{Error, Result};
use crate::model::{Architecture, Checkpoint, CurveRow, DsdlNet, FeatureSpec, Hyper};
use crate::semdict::SemanticDictionary;

pub const MANIFEST_FILE: &str = "manifest.txt";
const HEADER: &str = "dsdl-checkpoint\t1";
const DICTIONARY_FILE: &str = "dictionary.fmat";

fn file_name_for(param: &str) -> String {
    let safe: String = param
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.fmat")
}

pub fn save_checkpoint(ck: &Checkpoint, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let h = &ck.hyper;
    let mut m = String::new();
    let mut line = |k: &str, v: String| writeln!(m, "{k}\t{v}").expect("string write");
    line("dsdl-checkpoint", "1".into());
    line("epoch", ck.epoch.to_string());
    line("input_dim", ck.input_dim.to_string());
    line("features", ck.arch.features.to_string());
    line("hidden", ck.arch.hidden.to_string());
    line("lambda", h.lambda.to_string());
    line("beta", h.beta.to_string());
    line("lr", h.lr.to_string());
    line("momentum", h.momentum.to_string());
    line("weight_decay", h.weight_decay.to_string());
    line("lr_decay", h.lr_decay.to_string());
    line("lr_decay_every", h.lr_decay_every.to_string());
    line("epochs", h.epochs.to_string());
    line("batch_size", h.batch_size.to_string());
    line("seed", h.seed.to_string());
    line("grad_mode", h.grad_mode.to_string());
    line("sim_floor", h.sim_floor.to_string());
    for name in &ck.class_names {
        line("class", name.clone());
    }
    for (name, p) in ck.params.iter() {
        let file = file_name_for(name);
        save_fmat(&p.value, dir.join(&file))?;
        let (r, c) = p.value.shape();
        line("param", format!("{name}\t{r}x{c}\t{file}"));
    }
    let (r, c) = ck.dictionary.atoms().shape();
    save_fmat(ck.dictionary.atoms(), dir.join(DICTIONARY_FILE))?;
    line("dictionary", format!("{r}x{c}\t{DICTIONARY_FILE}"));

    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, m).map_err(|e| Error::io(&path, e))
}

fn parse_shape(s: &str) -> Option<(usize, usize)> {
    let (r, c) = s.split_once('x')?;
    Some((r.parse().ok()?, c.parse().ok()?))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |lineno: usize, msg: &str| Error::format(&path, format!("line {lineno}: {msg}"));

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == HEADER => {}
        _ => return Err(Error::format(&path, "not a checkpoint manifest")),
    }

    let mut hyper = Hyper::voc();
    let mut arch = Architecture::default();
    let mut epoch = None;
    let mut input_dim = None;
    let mut class_names = Vec::new();
    let mut params = ParamStore::new();
    let mut dictionary = None;

    for (n, l) in lines {
        if l.is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split('\t').collect();
        let value = fields.get(1).copied().ok_or_else(|| bad(n, "missing value"))?;
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad(n, "bad number"));
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad(n, "bad integer"));
        match fields[0] {
            "epoch" => epoch = Some(int(value)?),
            "input_dim" => input_dim = Some(int(value)?),
            "features" => arch.features = value.parse::<FeatureSpec>()?,
            "hidden" => arch.hidden = int(value)?,
            "lambda" => hyper.lambda = num(value)?,
            "beta" => hyper.beta = num(value)?,
            "lr" => hyper.lr = num(value)?,
            "momentum" => hyper.momentum = num(value)?,
            "weight_decay" => hyper.weight_decay = num(value)?,
            "lr_decay" => hyper.lr_decay = num(value)?,
            "lr_decay_every" => hyper.lr_decay_every = int(value)?,
            "epochs" => hyper.epochs = int(value)?,
            "batch_size" => hyper.batch_size = int(value)?,
            "seed" => hyper.seed = value.parse().map_err(|_| bad(n, "bad seed"))?,
            "grad_mode" => hyper.grad_mode = value.parse()?,
            "sim_floor" => hyper.sim_floor = num(value)?,
            "class" => class_names.push(value.to_string()),
            "param" | "dictionary" => {
                let (name, rest) = if fields[0] == "param" {
                    (Some(value), &fields[2..])
                } else {
                    (None, &fields[1..])
                };
                let [shape, file] = rest else {
                    return Err(bad(n, "expected shape and file"));
                };
                let shape = parse_shape(shape).ok_or_else(|| bad(n, "bad shape"))?;
                let m = load_fmat(dir.join(file))?;
                if m.shape() != shape {
                    return Err(bad(n, "stored matrix does not match declared shape"));
                }
                match name {
                    Some(name) => params.insert(name, m)?,
                    None => dictionary = Some(SemanticDictionary::new(m)?),
                }
            }
            other => return Err(bad(n, &format!("unknown key `{other}`"))),
        }
    }

    let dictionary = dictionary.ok_or_else(|| Error::format(&path, "no dictionary entry"))?;
    let input_dim = input_dim.ok_or_else(|| Error::format(&path, "no input_dim entry"))?;
    if dictionary.class_count() != class_names.len() {
        return Err(Error::ClassCountMismatch {
            expected: dictionary.class_count(),
            found: class_names.len(),
        });
    }
    hyper.validate()?;
    // shape check of every parameter against the declared architecture
    DsdlNet::attach(&params, &arch, input_dim)?;
    Ok(Checkpoint {
        params,
        hyper,
        arch,
        class_names,
        dictionary,
        input_dim,
        epoch: epoch.ok_or_else(|| Error::format(&path, "no epoch entry"))?,
    })
}

/// `epoch,lr,L_ce,L_dic,L_sim,L_total`, one row per epoch.
pub fn write_curve_csv(path: impl AsRef<Path>, rows: &[CurveRow]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("epoch,lr,L_ce,L_dic,L_sim,L_total\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{},{}", r.epoch, r.lr, r.ce, r.dic, r.sim, r.total)
            .expect("string write");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
