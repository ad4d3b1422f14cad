//! Subcommand implementations.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cfmsa_core::data::sha256_hex;
use cfmsa_core::gradcheck::{run_gradcheck, GradcheckConfig};
use cfmsa_core::model::ModelDims;
use cfmsa_core::numerics::argmax;
use cfmsa_core::{
    compare_report, evaluate, gen_synthetic, load_features, train, Dataset, Header, InferenceMode, ModelParams, Sample,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

fn require_out(rc: &RunConfig) -> Result<&Path, CliError> {
    rc.out.as_deref().ok_or_else(|| CliError::Usage("--out DIR is required".into()))
}

fn require_existing<'a>(p: Option<&'a Path>, flag: &str) -> Result<&'a Path, CliError> {
    let p = p.ok_or_else(|| CliError::Usage(format!("{flag} is required")))?;
    if !p.exists() {
        return Err(CliError::Usage(format!("{flag}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn write_file(dir: &Path, name: &str, contents: &str, digests: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    std::fs::write(dir.join(name), contents)?;
    digests.insert(name.to_string(), sha256_hex(contents.as_bytes()));
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Provenance block: the resolved config, plus a wall-clock stamp unless
/// disabled.
fn provenance(command: &str, rc: &RunConfig) -> Value {
    let mut v = json!({ "command": command, "run_config": rc });
    if rc.timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        v["generated_at_unix"] = json!(secs);
    }
    v
}

fn write_manifest(dir: &Path, command: &str, rc: &RunConfig, digests: BTreeMap<String, String>) -> Result<(), CliError> {
    let mut v = provenance(command, rc);
    v["artifacts"] = json!(digests);
    std::fs::write(dir.join("run.json"), pretty(&v))?;
    Ok(())
}

pub fn synth(rc: &RunConfig) -> Result<(), CliError> {
    rc.synthetic.validate()?;
    let out = require_out(rc)?;
    std::fs::create_dir_all(out)?;
    let (tr, va, te) = gen_synthetic(&rc.synthetic)?;
    let mut digests = BTreeMap::new();
    for (name, d) in [("train.jsonl", &tr), ("val.jsonl", &va), ("test.jsonl", &te)] {
        write_file(out, name, &d.to_jsonl()?, &mut digests)?;
    }
    write_manifest(out, "synth", rc, digests)?;
    println!("wrote {} / {} / {} samples to {}", tr.len(), va.len(), te.len(), out.display());
    Ok(())
}

/// Resolves `--data` for a split: a directory contributes `<split>.jsonl`, a
/// file is used as is.
fn dataset_path(data: &Path, split: &str) -> PathBuf {
    if data.is_dir() {
        data.join(format!("{split}.jsonl"))
    } else {
        data.to_path_buf()
    }
}

pub fn train_cmd(rc: &RunConfig) -> Result<(), CliError> {
    let data = require_existing(rc.data.as_deref(), "--data")?;
    rc.train.validate()?;
    let out = require_out(rc)?;
    let train_path = dataset_path(data, "train");
    let train_set = load_features(require_existing(Some(&train_path), "--data")?)?;
    let val_path = dataset_path(data, "val");
    let val_set = if val_path.exists() { load_features(&val_path)? } else { train_set.clone() };
    if val_set.header != train_set.header {
        return Err(CliError::Usage("train and val headers differ".into()));
    }

    let (model, history) = train(&rc.train, &train_set, &val_set)?;
    std::fs::create_dir_all(out)?;
    let mut digests = BTreeMap::new();
    write_file(out, "checkpoint.json", &model.to_json(), &mut digests)?;
    write_file(out, "history.jsonl", &history.to_jsonl(), &mut digests)?;
    write_manifest(out, "train", rc, digests)?;
    if let Some(last) = history.epochs.last() {
        println!("epoch {} train loss {:.6}", last.epoch, last.train_loss.total);
        for a in &last.val_accuracy {
            println!("  val {:<10} acc {:.4}", a.mode.as_str(), a.accuracy);
        }
    }
    println!("checkpoint {} (sha256 {})", out.join("checkpoint.json").display(), model.digest());
    Ok(())
}

fn load_checkpoint(rc: &RunConfig) -> Result<ModelParams, CliError> {
    let p = require_existing(rc.checkpoint.as_deref(), "--checkpoint")?;
    Ok(ModelParams::load(p)?)
}

pub fn eval_cmd(rc: &RunConfig) -> Result<(), CliError> {
    let data = require_existing(rc.data.as_deref(), "--data")?;
    let model = load_checkpoint(rc)?;
    let test_path = dataset_path(data, "test");
    let test_set = load_features(require_existing(Some(&test_path), "--data")?)?;
    model.dims.check_header(&test_set.header)?;
    let report = evaluate(&model, &test_set, &rc.modes)?;
    let table = compare_report(std::slice::from_ref(&report))?;
    print!("{table}");
    if let Some(out) = rc.out.as_deref() {
        std::fs::create_dir_all(out)?;
        let mut doc: Value = serde_json::from_str(&report.to_json()).expect("report is json");
        doc["provenance"] = provenance("eval", rc);
        let mut digests = BTreeMap::new();
        write_file(out, "report.json", &pretty(&doc), &mut digests)?;
        write_file(out, "report.txt", &table, &mut digests)?;
        write_manifest(out, "eval", rc, digests)?;
    }
    Ok(())
}

/// Sample record for inference; the label is optional.
#[derive(Debug, Deserialize)]
struct InferRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    text: Option<Vec<f64>>,
    #[serde(default)]
    image: Option<Vec<f64>>,
    #[serde(default)]
    label: Option<String>,
}

fn header_for(dims: &ModelDims) -> Header {
    let mut h = Header::new(dims.d_t, dims.d_i);
    if h.num_classes() != dims.num_classes {
        h.labels = (0..dims.num_classes).map(|j| format!("class{j}")).collect();
    }
    h
}

/// Per-mode prediction for one sample as a JSON document.
pub fn infer_sample(model: &ModelParams, header: &Header, s: &Sample, label: Option<&str>, modes: &[InferenceMode]) -> Result<Value, CliError> {
    let b = model.bundle(s)?;
    let mut out = serde_json::Map::new();
    for &m in modes {
        let v = match b.mode_scores(m) {
            Ok(scores) => {
                let k = argmax(&scores);
                json!({ "available": true, "class": k, "label": header.labels[k], "scores": scores })
            }
            Err(cfmsa_core::Error::ModeUnavailable(_)) => {
                json!({ "available": false, "reason": "needs both text and image" })
            }
            Err(e) => return Err(e.into()),
        };
        out.insert(m.as_str().to_string(), v);
    }
    Ok(json!({
        "id": s.id,
        "true_label": label,
        "text_present": b.text_present,
        "image_present": b.image_present,
        "modes": out,
    }))
}

pub fn infer_cmd(rc: &RunConfig, id: Option<&str>) -> Result<(), CliError> {
    let model = load_checkpoint(rc)?;
    let (header, sample, label) = match id {
        Some(id) => {
            let data = require_existing(rc.data.as_deref(), "--data")?;
            let d: Dataset = load_features(dataset_path(data, "test"))?;
            model.dims.check_header(&d.header)?;
            let s = d
                .samples
                .iter()
                .find(|s| s.id == id)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("no sample with id `{id}`")))?;
            let label = d.header.labels[s.label].clone();
            (d.header, s, Some(label))
        }
        None => {
            let mut line = String::new();
            std::io::stdin().lock().read_line(&mut line)?;
            let rec: InferRecord =
                serde_json::from_str(line.trim()).map_err(|e| CliError::Usage(format!("stdin record: {e}")))?;
            let header = header_for(&model.dims);
            let s = Sample { id: rec.id.unwrap_or_default(), text: rec.text, image: rec.image, label: 0 };
            header.check_sample(&s)?;
            (header, s, rec.label)
        }
    };
    let doc = infer_sample(&model, &header, &sample, label.as_deref(), &rc.modes)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(pretty(&doc).as_bytes())?;
    Ok(())
}

pub fn gradcheck_cmd(rc: &RunConfig) -> Result<(), CliError> {
    let cfg = GradcheckConfig { seed: rc.train.seed, ..Default::default() };
    let report = run_gradcheck(&cfg)?;
    print!("{}", report.to_table());
    if let Some(out) = rc.out.as_deref() {
        std::fs::create_dir_all(out)?;
        let mut digests = BTreeMap::new();
        let doc = serde_json::to_value(&report).expect("report serializes");
        write_file(out, "gradcheck.json", &pretty(&doc), &mut digests)?;
        write_manifest(out, "gradcheck", rc, digests)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Failed("gradient check failed".into()))
    }
}
