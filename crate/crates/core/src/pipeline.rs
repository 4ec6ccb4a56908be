//! Refinement orchestration: prompt mining, candidate selection, cascaded
//! iterations and recomposition of semantic label maps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaption::LoraAdaptor;
use crate::error::{Error, Result};
use crate::excavation::{excavate, ExcavationConfig, ImageEmbedding, PromptKinds, PromptSet};
use crate::exec::try_ordered_map;
use crate::mask::{BinaryMask, LabelMask};
use crate::metrics::{argmax, iou_unchecked};
use crate::segmenter::{MultiMaskOutput, PromptedSegmenter};
use crate::stm::{stm_refine_inputs, MergeConfig};

/// Score used to pick among candidates.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// The segmenter's own quality estimate.
    #[default]
    Predicted,
    /// Quality estimate corrected by a trained adaptor.
    Adapted,
    /// IoU with the mask being refined.
    CoarseIou,
    /// IoU with ground truth; an upper bound for any selector.
    GtIou,
}

impl Selector {
    pub const ALL: [Selector; 4] = [Self::Predicted, Self::Adapted, Self::CoarseIou, Self::GtIou];

    pub fn name(self) -> &'static str {
        match self {
            Self::Predicted => "predicted",
            Self::Adapted => "adapted",
            Self::CoarseIou => "coarse_iou",
            Self::GtIou => "gt_iou",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|sel| sel.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown selector `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub excavation: ExcavationConfig,
    pub merge: MergeConfig,
    pub iterations: u32,
    pub selector: Selector,
    pub prompts: PromptKinds,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            excavation: ExcavationConfig::default(),
            merge: MergeConfig::default(),
            iterations: 1,
            selector: Selector::Predicted,
            prompts: PromptKinds::ALL,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        self.excavation.validate()?;
        self.merge.validate()?;
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.prompts.is_empty() {
            return Err(Error::NoPrompt);
        }
        Ok(())
    }
}

/// Extra inputs some selectors need.
#[derive(Clone, Copy, Debug, Default)]
pub struct SelectionContext<'a> {
    pub coarse: Option<&'a BinaryMask>,
    pub gt: Option<&'a BinaryMask>,
    pub adaptor: Option<&'a LoraAdaptor>,
}

/// Per-candidate scores under `selector`.
pub fn selector_scores(
    out: &MultiMaskOutput,
    selector: Selector,
    ctx: &SelectionContext<'_>,
) -> Result<Vec<f64>> {
    let against = |m: Option<&BinaryMask>| -> Result<Vec<f64>> {
        let m =
            m.ok_or_else(|| Error::Config(format!("selector {selector} needs a reference mask")))?;
        out.masks
            .iter()
            .map(|c| {
                c.same_dims(m)?;
                Ok(iou_unchecked(c, m))
            })
            .collect()
    };
    match selector {
        Selector::Predicted => Ok(out.iou_pred.clone()),
        Selector::Adapted => ctx
            .adaptor
            .ok_or_else(|| Error::Config("selector adapted needs an adaptor".into()))?
            .adapted_scores(&out.hidden, &out.iou_pred),
        Selector::CoarseIou => against(ctx.coarse),
        Selector::GtIou => against(ctx.gt),
    }
}

/// Index of the best-scoring candidate; ties go to the lowest index.
pub fn select_best(
    out: &MultiMaskOutput,
    selector: Selector,
    ctx: &SelectionContext<'_>,
) -> Result<usize> {
    let scores = selector_scores(out, selector, ctx)?;
    argmax(&scores).ok_or_else(|| Error::Model("segmenter returned no candidates".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub prompts: PromptSet,
    pub output: MultiMaskOutput,
    pub scores: Vec<f64>,
    pub chosen_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub passthrough: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined_iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineResult {
    pub refined: BinaryMask,
    /// `None` when the input was passed through unrefined.
    pub chosen_index: Option<usize>,
    pub iterations: Vec<IterationRecord>,
    pub diagnostics: Diagnostics,
}

impl RefineResult {
    /// Selector score of the final choice.
    pub fn selected_score(&self) -> Option<f64> {
        self.iterations.last().map(|it| it.scores[it.chosen_index])
    }
}

/// Refines one coarse mask. Each iteration re-mines every enabled prompt from
/// the previous iteration's choice; `coarse_iou` compares against that same
/// input, so running twice with one iteration equals one run with two.
pub fn refine_instance(
    emb: &ImageEmbedding,
    coarse: &BinaryMask,
    cfg: &RefineConfig,
    backend: &dyn PromptedSegmenter,
    ctx: &SelectionContext<'_>,
) -> Result<RefineResult> {
    cfg.validate()?;
    if coarse.dims() != (emb.src_width, emb.src_height) {
        return Err(Error::DimMismatch(format!(
            "coarse mask {:?} vs image {}x{}",
            coarse.dims(),
            emb.src_width,
            emb.src_height
        )));
    }
    let mut current = coarse.clone();
    let mut iterations = Vec::new();
    let mut warning = None;
    for _ in 0..cfg.iterations {
        if current.is_empty() {
            let msg = "empty coarse mask passed through unrefined";
            log::warn!("{msg}");
            warning = Some(msg.to_string());
            break;
        }
        let prompts = excavate(
            &current,
            emb,
            &cfg.excavation,
            cfg.prompts,
            backend.prompt_grid(emb),
        )?;
        let output = backend.predict(emb, &prompts)?;
        let step_ctx = SelectionContext {
            coarse: Some(&current),
            ..*ctx
        };
        let scores = selector_scores(&output, cfg.selector, &step_ctx)?;
        let chosen = argmax(&scores)
            .ok_or_else(|| Error::Model("segmenter returned no candidates".into()))?;
        current = output.masks[chosen].clone();
        iterations.push(IterationRecord {
            prompts,
            output,
            scores,
            chosen_index: chosen,
        });
    }
    let diagnostics = Diagnostics {
        passthrough: iterations.is_empty(),
        warning,
        coarse_iou: ctx.gt.map(|g| iou_unchecked(coarse, g)),
        refined_iou: ctx.gt.map(|g| iou_unchecked(&current, g)),
    };
    Ok(RefineResult {
        refined: current,
        chosen_index: iterations.last().map(|it| it.chosen_index),
        iterations,
        diagnostics,
    })
}

/// Refines several instances of one image, results in input order.
pub fn refine_instances(
    emb: &ImageEmbedding,
    coarse: &[BinaryMask],
    gt: Option<&[BinaryMask]>,
    cfg: &RefineConfig,
    backend: &dyn PromptedSegmenter,
    adaptor: Option<&LoraAdaptor>,
    jobs: usize,
) -> Result<Vec<RefineResult>> {
    if gt.is_some_and(|g| g.len() != coarse.len()) {
        return Err(Error::DimMismatch(
            "ground truth count differs from coarse count".into(),
        ));
    }
    let idx: Vec<usize> = (0..coarse.len()).collect();
    try_ordered_map(&idx, jobs, |&i| {
        let ctx = SelectionContext {
            coarse: None,
            gt: gt.map(|g| &g[i]),
            adaptor,
        };
        refine_instance(emb, &coarse[i], cfg, backend, &ctx)
    })
}

/// One region refined on behalf of a class.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionOutcome {
    pub class: u32,
    pub input: BinaryMask,
    /// `None` for trivial regions kept as-is.
    pub result: Option<RefineResult>,
}

impl RegionOutcome {
    pub fn mask(&self) -> &BinaryMask {
        self.result.as_ref().map_or(&self.input, |r| &r.refined)
    }

    /// Painting priority; kept-as-is regions lose against any refined mask.
    pub fn priority(&self) -> f64 {
        self.result
            .as_ref()
            .and_then(RefineResult::selected_score)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticResult {
    pub labels: LabelMask,
    pub regions: Vec<RegionOutcome>,
}

/// Refines every class of a semantic map region by region and repaints it.
/// Where classes overlap the higher selected score wins, ties going to the
/// lower class id; pixels nobody claims become background.
pub fn refine_semantic(
    emb: &ImageEmbedding,
    semantic: &LabelMask,
    gt: Option<&LabelMask>,
    cfg: &RefineConfig,
    backend: &dyn PromptedSegmenter,
    adaptor: Option<&LoraAdaptor>,
    jobs: usize,
) -> Result<SemanticResult> {
    cfg.validate()?;
    let (w, h) = semantic.dims();
    if (w, h) != (emb.src_width, emb.src_height) || gt.is_some_and(|g| g.dims() != (w, h)) {
        return Err(Error::DimMismatch(
            "label map does not match the image".into(),
        ));
    }
    let mut work: Vec<(u32, BinaryMask, bool)> = Vec::new();
    for (class, t) in stm_refine_inputs(semantic, &cfg.merge) {
        work.extend(t.targets.into_iter().map(|m| (class, m, true)));
        work.extend(t.passthrough.into_iter().map(|m| (class, m, false)));
    }
    let gt_masks: BTreeMap<u32, BinaryMask> = match gt {
        Some(g) => work.iter().map(|(c, _, _)| (*c, g.mask_of(*c))).collect(),
        None => BTreeMap::new(),
    };
    let regions = try_ordered_map(&work, jobs, |(class, input, refine)| {
        let result = if *refine {
            let ctx = SelectionContext {
                coarse: None,
                gt: gt_masks.get(class),
                adaptor,
            };
            Some(refine_instance(emb, input, cfg, backend, &ctx)?)
        } else {
            None
        };
        Ok(RegionOutcome {
            class: *class,
            input: input.clone(),
            result,
        })
    })?;
    Ok(SemanticResult {
        labels: recompose(w, h, &regions),
        regions,
    })
}

/// Paints region masks by priority.
pub fn recompose(width: u32, height: u32, regions: &[RegionOutcome]) -> LabelMask {
    let n = width as usize * height as usize;
    let mut best: Vec<Option<(f64, u32)>> = vec![None; n];
    for r in regions {
        let p = r.priority();
        for (slot, &on) in best.iter_mut().zip(r.mask().data()) {
            if !on {
                continue;
            }
            let wins = match *slot {
                None => true,
                Some((q, c)) => p > q || (p == q && r.class < c),
            };
            if wins {
                *slot = Some((p, r.class));
            }
        }
    }
    let data = best.into_iter().map(|s| s.map_or(0, |(_, c)| c)).collect();
    LabelMask::from_vec(width, height, data).expect("sized above")
}
