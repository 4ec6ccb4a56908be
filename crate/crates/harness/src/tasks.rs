//! The work behind each subcommand, free of argument parsing.

use std::path::Path;

use maskforge::adaption::{
    build_training_set, train, LoraAdaptor, TrainConfig, TrainImage, TrainLog, TrainSample,
};
use maskforge::exec::ordered_map;
use maskforge::mask::{BinaryMask, LabelMask};
use maskforge::metrics::{EvalReport, InstanceRow, Top1Record};
use maskforge::pipeline::{
    refine_instances, refine_semantic, selector_scores, RefineConfig, RefineResult,
    SelectionContext, Selector,
};
use maskforge::seed::{derive_seed, Fingerprint};
use maskforge::segmenter::{OracleScene, SceneGenerator};
use maskforge::stm::stm_refine_inputs;

use crate::backend::{Backend, SceneFile};
use crate::dataset::{write_image, write_targets, Mode, Sample, Targets};
use crate::defects::{simulate_defects_for, DefectSpec};
use crate::error::{HarnessError, Result};
use crate::report::{class_rows, instance_rows, pooled_miou, top1, TargetRecord};

/// Stable 64-bit key of a name, for seeding per-image streams.
pub fn name_key(name: &str) -> u64 {
    let mut f = Fingerprint::default();
    for b in name.bytes() {
        f.write_u64(b as u64);
    }
    f.finish()
}

fn collect<R>(results: Vec<Result<R>>) -> Result<Vec<R>> {
    results.into_iter().collect()
}

struct ImageOutcome {
    targets: Targets,
    records: Vec<TargetRecord>,
    rows: Vec<InstanceRow>,
    top1: Vec<Top1Record>,
    /// Refined and ground-truth labels, semantic mode only.
    labels: Option<(LabelMask, LabelMask)>,
}

pub struct RefineOutput {
    pub targets: Vec<(String, Targets)>,
    pub records: Vec<TargetRecord>,
    pub eval: Option<EvalReport>,
}

fn record(image: &str, target: String, r: Option<&RefineResult>) -> TargetRecord {
    TargetRecord {
        image: image.to_string(),
        target,
        chosen_index: r.and_then(|r| r.chosen_index),
        score: r.and_then(RefineResult::selected_score),
        passthrough: r.is_none_or(|r| r.diagnostics.passthrough),
        warning: r.and_then(|r| r.diagnostics.warning.clone()),
    }
}

/// Candidate scores of the last iteration under every applicable selector.
fn top1_record(
    r: &RefineResult,
    coarse: &BinaryMask,
    gt: &BinaryMask,
    adaptor: Option<&LoraAdaptor>,
) -> Result<Option<Top1Record>> {
    let Some(last) = r.iterations.last() else {
        return Ok(None);
    };
    let input = match r.iterations.len() {
        1 => coarse,
        n => {
            let prev = &r.iterations[n - 2];
            &prev.output.masks[prev.chosen_index]
        }
    };
    let ctx = SelectionContext {
        coarse: Some(input),
        gt: Some(gt),
        adaptor,
    };
    let mut selectors = vec![Selector::Predicted, Selector::CoarseIou];
    if adaptor.is_some() {
        selectors.push(Selector::Adapted);
    }
    let mut scores = std::collections::BTreeMap::new();
    for s in selectors {
        scores.insert(
            s.name().to_string(),
            selector_scores(&last.output, s, &ctx)?,
        );
    }
    Ok(Some(Top1Record {
        scores,
        gt_ious: selector_scores(&last.output, Selector::GtIou, &ctx)?,
    }))
}

fn refine_one(
    sample: &Sample,
    backend: &Backend,
    cfg: &RefineConfig,
    adaptor: Option<&LoraAdaptor>,
) -> Result<ImageOutcome> {
    let name = sample.name.as_str();
    backend.with(name, |seg| {
        let emb = seg.embed(&sample.image)?;
        match &sample.coarse {
            Targets::Instances(coarse) => {
                let gt: Option<Vec<BinaryMask>> =
                    match sample.gt.as_ref().and_then(Targets::instances) {
                        Some(g) => Some(
                            coarse
                                .iter()
                                .map(|(id, _)| {
                                    g.iter()
                                        .find(|(k, _)| k == id)
                                        .map(|(_, m)| m.clone())
                                        .ok_or_else(|| {
                                            HarnessError::Config(format!(
                                                "no ground truth for `{name}/{id}`"
                                            ))
                                        })
                                })
                                .collect::<Result<_>>()?,
                        ),
                        None => None,
                    };
                let masks: Vec<BinaryMask> = coarse.iter().map(|(_, m)| m.clone()).collect();
                let results = refine_instances(&emb, &masks, gt.as_deref(), cfg, seg, adaptor, 1)?;
                let refined: Vec<(String, BinaryMask)> = coarse
                    .iter()
                    .zip(&results)
                    .map(|((id, _), r)| (id.clone(), r.refined.clone()))
                    .collect();
                let records = coarse
                    .iter()
                    .zip(&results)
                    .map(|((id, _), r)| record(name, id.clone(), Some(r)))
                    .collect();
                let (mut rows, mut top) = (Vec::new(), Vec::new());
                if let Some(g) = sample.gt.as_ref().and_then(Targets::instances) {
                    rows = instance_rows(name, &refined, g, Some(coarse))?;
                    let gt = gt.as_ref().expect("aligned with instances");
                    for ((r, c), g) in results.iter().zip(&masks).zip(gt) {
                        top.extend(top1_record(r, c, g, adaptor)?);
                    }
                }
                Ok(ImageOutcome {
                    targets: Targets::Instances(refined),
                    records,
                    rows,
                    top1: top,
                    labels: None,
                })
            }
            Targets::Semantic(coarse) => {
                let gt = sample.gt.as_ref().and_then(Targets::semantic);
                let out = refine_semantic(&emb, coarse, gt, cfg, seg, adaptor, 1)?;
                let mut counts = std::collections::BTreeMap::new();
                let mut records = Vec::new();
                let mut top = Vec::new();
                for region in &out.regions {
                    let k = counts.entry(region.class).or_insert(0u32);
                    records.push(record(
                        name,
                        format!("{}/{}", region.class, k),
                        region.result.as_ref(),
                    ));
                    *k += 1;
                    if let (Some(r), Some(g)) = (&region.result, gt) {
                        top.extend(top1_record(
                            r,
                            &region.input,
                            &g.mask_of(region.class),
                            adaptor,
                        )?);
                    }
                }
                let rows = match gt {
                    Some(g) => class_rows(name, &out.labels, g, Some(coarse))?,
                    None => Vec::new(),
                };
                Ok(ImageOutcome {
                    labels: gt.map(|g| (out.labels.clone(), g.clone())),
                    targets: Targets::Semantic(out.labels),
                    records,
                    rows,
                    top1: top,
                })
            }
        }
    })
}

/// Refines every sample; images are spread over `jobs` workers and merged
/// back in input order.
pub fn refine_dataset(
    samples: &[Sample],
    backend: &Backend,
    cfg: &RefineConfig,
    adaptor: Option<&LoraAdaptor>,
    jobs: usize,
) -> Result<RefineOutput> {
    cfg.validate()?;
    let outcomes = collect(ordered_map(samples, jobs, |s| {
        refine_one(s, backend, cfg, adaptor)
    }))?;
    let has_gt = samples.iter().any(|s| s.gt.is_some());
    let mut targets = Vec::new();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut top = Vec::new();
    let mut labels = Vec::new();
    for (s, o) in samples.iter().zip(outcomes) {
        targets.push((s.name.clone(), o.targets));
        records.extend(o.records);
        rows.extend(o.rows);
        top.extend(o.top1);
        labels.extend(o.labels);
    }
    let eval = if has_gt {
        let pairs: Vec<(&LabelMask, &LabelMask)> = labels.iter().map(|(p, g)| (p, g)).collect();
        Some(EvalReport::new(
            rows,
            samples.len(),
            pooled_miou(&pairs)?,
            top1(&top)?,
        ))
    } else {
        None
    };
    Ok(RefineOutput {
        targets,
        records,
        eval,
    })
}

/// Scores `pred` against `gt` image by image.
pub fn evaluate(
    pred: &std::collections::BTreeMap<String, Targets>,
    gt: &std::collections::BTreeMap<String, Targets>,
    mode: Mode,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for (name, g) in gt {
        let p = pred
            .get(name)
            .ok_or_else(|| HarnessError::Config(format!("no prediction for image `{name}`")))?;
        if let (Some(a), Some(b)) = (p.dims(), g.dims()) {
            if a != b {
                return Err(HarnessError::Config(format!(
                    "`{name}`: prediction is {}x{}, ground truth {}x{}",
                    a.0, a.1, b.0, b.1
                )));
            }
        }
        match (mode, p, g) {
            (Mode::Instance, Targets::Instances(p), Targets::Instances(g)) => {
                rows.extend(instance_rows(name, p, g, None)?);
            }
            (Mode::Semantic, Targets::Semantic(p), Targets::Semantic(g)) => {
                rows.extend(class_rows(name, p, g, None)?);
                pairs.push((p, g));
            }
            _ => {
                return Err(HarnessError::Config(format!(
                    "`{name}`: masks do not match mode {mode:?}"
                )))
            }
        }
    }
    Ok(EvalReport::new(
        rows,
        gt.len(),
        pooled_miou(&pairs)?,
        Default::default(),
    ))
}

/// Training samples from every coarse target (semantic maps are split and
/// merged first), then a trained adaptor.
pub fn adapt_iou(
    samples: &[Sample],
    backend: &Backend,
    refine: &RefineConfig,
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<(LoraAdaptor, TrainLog, usize)> {
    cfg.validate()?;
    let per_image = ordered_map(samples, jobs, |s| -> Result<Vec<TrainSample>> {
        let coarse: Vec<BinaryMask> = match &s.coarse {
            Targets::Instances(v) => v.iter().map(|(_, m)| m.clone()).collect(),
            Targets::Semantic(l) => stm_refine_inputs(l, &refine.merge)
                .into_values()
                .flat_map(|t| t.targets)
                .collect(),
        };
        backend.with(&s.name, |seg| {
            let emb = seg.embed(&s.image)?;
            let image = TrainImage {
                embedding: &emb,
                coarse: &coarse,
            };
            Ok(build_training_set(
                &[image],
                seg,
                &refine.excavation,
                &cfg.modes,
                1,
            )?)
        })
    });
    let set: Vec<TrainSample> = collect(per_image)?.into_iter().flatten().collect();
    if set.is_empty() {
        return Err(HarnessError::Config(
            "no training samples: every target was empty or tied on coarse IoU".into(),
        ));
    }
    let (adaptor, log) = train(&set, cfg)?;
    Ok((adaptor, log, set.len()))
}

/// Defected copies of every target. Dropped instances disappear; in
/// semantic maps each class is defected on its own and repainted in class
/// order.
pub fn simulate_dataset(
    items: &[(String, Targets)],
    spec: &DefectSpec,
    jobs: usize,
) -> Result<Vec<(String, Targets)>> {
    spec.validate()?;
    let out = ordered_map(items, jobs, |(name, t)| -> Result<(String, Targets)> {
        let key = name_key(name);
        let t = match t {
            Targets::Instances(v) => {
                let mut out = Vec::new();
                for (k, (id, m)) in v.iter().enumerate() {
                    let stream = [key, k as u64];
                    if m.is_empty() || spec.drops(&stream) {
                        continue;
                    }
                    out.push((id.clone(), simulate_defects_for(m, spec, &stream)?));
                }
                Targets::Instances(out)
            }
            Targets::Semantic(l) => {
                let (w, h) = l.dims();
                let mut out = LabelMask::new(w, h);
                for class in l.labels() {
                    let stream = [key, class as u64];
                    if spec.drops(&stream) {
                        continue;
                    }
                    for (x, y) in
                        simulate_defects_for(&l.mask_of(class), spec, &stream)?.foreground()
                    {
                        out.set(x, y, class);
                    }
                }
                Targets::Semantic(out)
            }
        };
        Ok((name.clone(), t))
    });
    collect(out)
}

pub fn scene_name(i: u64) -> String {
    format!("scene_{i:03}")
}

/// Writes `count` synthetic scenes as a dataset: `images/`, `gt/`,
/// `scenes.json` and, when `defects` is given, `coarse/`.
pub fn synth_scenes(
    dir: &Path,
    generator: &SceneGenerator,
    count: u64,
    seed: u64,
    defects: Option<&DefectSpec>,
    jobs: usize,
) -> Result<()> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| HarnessError::io(&images, e))?;
    let scenes: Vec<(String, OracleScene)> = (0..count)
        .map(|i| {
            (
                scene_name(i),
                generator.generate(derive_seed(seed, &[0x5ce4e5, i])),
            )
        })
        .collect();
    let gt: Vec<(String, Targets)> = scenes
        .iter()
        .map(|(name, s)| {
            let inst = s
                .shapes
                .iter()
                .map(|sh| (format!("{:03}", sh.id), sh.mask.clone()))
                .collect();
            (name.clone(), Targets::Instances(inst))
        })
        .collect();
    for (name, s) in &scenes {
        write_image(&images.join(format!("{name}.png")), &s.render())?;
    }
    write_targets(&dir.join("gt"), &gt)?;
    if let Some(spec) = defects {
        write_targets(&dir.join("coarse"), &simulate_dataset(&gt, spec, jobs)?)?;
    }
    let file = SceneFile::Keyed {
        scenes: scenes.into_iter().collect(),
    };
    let path = dir.join("scenes.json");
    let text = serde_json::to_string(&file).map_err(|source| HarnessError::Json {
        path: path.clone(),
        source,
    })?;
    std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))
}
