use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

use super::settings::{Job, Manifest, ReportSettings, SplitMode};
use crate::eval::{attention_graph, intensity_trace, test_ll};
use crate::model::Checkpoint;
use crate::pgem::{sample_spec, simulate_dataset};
use crate::streams::{load_dataset, save_dataset, split_by_stream, split_by_time, Dataset};
use crate::train::train;

/// Offsets the simulation seed from the structure seed so the two draws are
/// independent.
const SIMULATION_SEED_OFFSET: u64 = 0x5EED_0000_0001;

fn create_dir(dir: &Path) -> Result<()> {
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, manifest.to_json()).with_context(|| format!("writing manifest {}", path.display()))
}

fn load(path: &Path, what: &str) -> Result<Dataset> {
    ensure!(!path.as_os_str().is_empty(), "--data is required for {what}");
    load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

fn load_inputs(s: &ReportSettings, what: &str) -> Result<(Checkpoint, Dataset)> {
    ensure!(!s.checkpoint.as_os_str().is_empty(), "--ckpt is required for {what}");
    let ck = Checkpoint::load(&s.checkpoint).with_context(|| format!("loading {}", s.checkpoint.display()))?;
    let data = load(&s.data, what)?;
    if data.label_count() != ck.config.label_count {
        bail!(
            "{} has {} labels but the checkpoint was trained on {}",
            s.data.display(),
            data.label_count(),
            ck.config.label_count
        );
    }
    Ok((ck, data))
}

/// Validates the job, writes its manifest to `manifest_path`, then runs it.
/// Returns the one-line summary.
pub fn execute(job: &Job, parallel: usize, manifest_path: &Path) -> Result<String> {
    let parallel = parallel.max(1);
    let mut job = job.clone();
    validate(&mut job)?;
    create_dir(job.out_dir())?;
    let manifest = Manifest::new(job.clone(), parallel);
    write_manifest(&manifest, manifest_path)?;
    let outputs = &manifest.outputs;

    match &job {
        Job::GenPgem(s) => {
            let spec = sample_spec(s.labels, s.seed, &s.generator)?;
            let data =
                simulate_dataset(&spec, s.streams, s.horizon, s.seed.wrapping_add(SIMULATION_SEED_OFFSET), &s.name);
            spec.save(&outputs[0])?;
            save_dataset(&data, &outputs[1])?;
            Ok(format!(
                "gen-pgem: {} streams, {} events, {} labels, {} edges -> {}",
                data.streams().len(),
                data.num_events(),
                s.labels,
                spec.edges().len(),
                outputs[1].display()
            ))
        }
        Job::Split(s) => {
            let data = load(&s.data, "split")?;
            let (tr, te) = match s.by {
                SplitMode::Stream => split_by_stream(&data, s.fraction, s.seed)?,
                SplitMode::Time => split_by_time(&data, s.fraction)?,
            };
            save_dataset(&tr, &outputs[0])?;
            save_dataset(&te, &outputs[2])?;
            Ok(format!(
                "split: {} train streams ({} events), {} test streams ({} events)",
                tr.streams().len(),
                tr.num_events(),
                te.streams().len(),
                te.num_events()
            ))
        }
        Job::Train(s) => {
            let data = load(&s.data, "train")?;
            let val = s.validation.as_deref().map(|p| load(p, "validation")).transpose()?;
            let mut tc = s.train.clone();
            tc.workers = parallel;
            let (params, report) = train(&data, val.as_ref(), &s.model, &tc)?;
            Checkpoint::new(s.model.clone(), report.steps, params).save(&outputs[0])?;
            report.save_csv(&outputs[1])?;
            let last = report.epochs.last();
            Ok(format!(
                "train: {} epochs, {} steps, final train_ll {:.4} -> {}",
                report.epochs.len(),
                report.steps,
                last.map_or(f64::NAN, |r| r.train_ll),
                outputs[0].display()
            ))
        }
        Job::Eval(s) => {
            let (ck, data) = load_inputs(s, "eval")?;
            let k = s.fakes.unwrap_or(ck.config.fake_count);
            let report = test_ll(&ck.params, &ck.config, &data, k, parallel)?;
            report.save_csv(&outputs[0])?;
            Ok(format!(
                "eval: {} streams, {} events, total ll {:.4} -> {}",
                report.streams.len(),
                report.num_events(),
                report.total(),
                outputs[0].display()
            ))
        }
        Job::AttnGraph(s) => {
            let (ck, data) = load_inputs(s, "attn-graph")?;
            let mut config = ck.config.clone();
            if let Some(k) = s.fakes {
                config.fake_count = k;
            }
            let graph = attention_graph(&ck.params, &config, &data, s.threshold, parallel)?;
            graph.save_dot(&outputs[0])?;
            graph.save_json(&outputs[1])?;
            Ok(format!(
                "attn-graph: {} edges at threshold {} -> {}",
                graph.edges.len(),
                s.threshold,
                outputs[0].display()
            ))
        }
        Job::Trace(s) => {
            let (ck, data) = load_inputs(s, "trace")?;
            let stream = match &s.stream {
                Some(id) => data.stream(id).with_context(|| format!("no stream {id:?} in {}", s.data.display()))?,
                None => data.streams().first().context("dataset has no streams")?,
            };
            let k = s.fakes.unwrap_or(ck.config.fake_count);
            let trace = intensity_trace(&ck.params, &ck.config, stream, k)?;
            trace.save_csv(&outputs[0])?;
            Ok(format!("trace: stream {}, {} points -> {}", stream.id(), trace.points.len(), outputs[0].display()))
        }
    }
}

/// Checks settings before anything is written; fills in what follows from the
/// inputs, such as the label count.
fn validate(job: &mut Job) -> Result<()> {
    match job {
        Job::GenPgem(s) => {
            ensure!(s.labels >= 1, "--labels must be at least 1");
            ensure!(s.streams >= 1, "--streams must be at least 1");
            ensure!(s.horizon.is_finite() && s.horizon > 0.0, "--horizon must be positive");
            ensure!(!s.name.is_empty(), "--name must not be empty");
        }
        Job::Split(s) => {
            ensure!(!s.data.as_os_str().is_empty(), "--data is required for split");
            ensure!(s.fraction > 0.0 && s.fraction < 1.0, "--fraction must lie strictly between 0 and 1");
        }
        Job::Train(s) => {
            ensure!(!s.data.as_os_str().is_empty(), "--data is required for train");
            let meta = crate::streams::metadata_path(&s.data);
            let text = fs::read_to_string(&meta)
                .with_context(|| format!("missing metadata sidecar: expected {}", meta.display()))?;
            let m: crate::streams::Metadata =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", meta.display()))?;
            s.model.label_count = m.num_labels;
            s.model.validate()?;
            s.train.validate()?;
        }
        Job::Eval(s) | Job::AttnGraph(s) | Job::Trace(s) => {
            ensure!(!s.checkpoint.as_os_str().is_empty(), "--ckpt is required");
            ensure!(!s.data.as_os_str().is_empty(), "--data is required");
            ensure!(s.threshold.is_finite() && s.threshold >= 0.0, "--threshold must be non-negative");
        }
    }
    Ok(())
}
