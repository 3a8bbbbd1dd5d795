//! Scene-completion IoU and semantic scene-completion mIoU over label grids.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::voxelizer::LabelView;
use crate::EMPTY;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("grid dims differ: pred {pred:?}, gt {gt:?}")]
    DimMismatch { pred: [usize; 3], gt: [usize; 3] },
    #[error("{grid} voxel {voxel} has label {label}, expected < {class_count}")]
    LabelOutOfRange {
        grid: &'static str,
        voxel: usize,
        label: u16,
        class_count: u16,
    },
    #[error("label buffer holds {len} voxels but dims {dims:?} need {expected}")]
    BadView {
        dims: [usize; 3],
        len: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassTally {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassTally {
    pub fn union(&self) -> u64 {
        self.tp + self.fp + self.fn_
    }

    /// `None` when the class is absent from both grids.
    pub fn iou(&self) -> Option<f64> {
        let u = self.union();
        (u > 0).then(|| self.tp as f64 / u as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccEvalReport {
    /// Voxels occupied in both grids.
    pub occupied_intersection: u64,
    /// Voxels occupied in either grid.
    pub occupied_union: u64,
    /// `None` when neither grid has an occupied voxel.
    pub sc_iou: Option<f64>,
    /// Indexed by class id; entry `EMPTY` is all zeros.
    pub per_class: Vec<ClassTally>,
    /// Mean over classes with a defined IoU; `None` if there are none.
    pub ssc_miou: Option<f64>,
}

impl OccEvalReport {
    pub fn class_iou(&self, class: u16) -> Option<f64> {
        self.per_class.get(class as usize).and_then(ClassTally::iou)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}

impl fmt::Display for OccEvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (class, t) in self.per_class.iter().enumerate().skip(1) {
            writeln!(
                f,
                "class {class:>3}  tp {:>9}  fp {:>9}  fn {:>9}  iou {}",
                t.tp,
                t.fp,
                t.fn_,
                fmt_opt(t.iou())
            )?;
        }
        writeln!(
            f,
            "sc_iou {}  ({} / {})",
            fmt_opt(self.sc_iou),
            self.occupied_intersection,
            self.occupied_union
        )?;
        writeln!(f, "ssc_miou {}", fmt_opt(self.ssc_miou))
    }
}

fn check_view(view: &LabelView<'_>) -> Result<(), MetricsError> {
    let expected = view.dims.iter().product();
    if view.labels.len() != expected {
        return Err(MetricsError::BadView {
            dims: view.dims,
            len: view.labels.len(),
            expected,
        });
    }
    Ok(())
}

fn check_labels(grid: &'static str, labels: &[u16], class_count: u16) -> Result<(), MetricsError> {
    match labels.iter().position(|&l| l >= class_count) {
        Some(voxel) => Err(MetricsError::LabelOutOfRange {
            grid,
            voxel,
            label: labels[voxel],
            class_count,
        }),
        None => Ok(()),
    }
}

#[derive(Clone)]
struct Tally {
    inter: u64,
    union: u64,
    classes: Vec<ClassTally>,
}

impl Tally {
    fn new(m: usize) -> Self {
        Self {
            inter: 0,
            union: 0,
            classes: vec![ClassTally::default(); m],
        }
    }

    fn add(mut self, p: u16, g: u16) -> Self {
        let (po, go) = (p != EMPTY, g != EMPTY);
        self.inter += (po && go) as u64;
        self.union += (po || go) as u64;
        if p == g {
            if p != EMPTY {
                self.classes[p as usize].tp += 1;
            }
        } else {
            if p != EMPTY {
                self.classes[p as usize].fp += 1;
            }
            if g != EMPTY {
                self.classes[g as usize].fn_ += 1;
            }
        }
        self
    }

    fn merge(mut self, other: Self) -> Self {
        self.inter += other.inter;
        self.union += other.union;
        for (a, b) in self.classes.iter_mut().zip(other.classes) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
        self
    }
}

/// Compares `pred` against `gt`, both holding labels `< class_count`.
pub fn evaluate(pred: LabelView<'_>, gt: LabelView<'_>, class_count: u16) -> Result<OccEvalReport, MetricsError> {
    if pred.dims != gt.dims {
        return Err(MetricsError::DimMismatch {
            pred: pred.dims,
            gt: gt.dims,
        });
    }
    check_view(&pred)?;
    check_view(&gt)?;
    check_labels("pred", pred.labels, class_count)?;
    check_labels("gt", gt.labels, class_count)?;
    let m = class_count as usize;
    let t = pred
        .labels
        .par_iter()
        .zip(gt.labels)
        .fold(|| Tally::new(m), |t, (&p, &g)| t.add(p, g))
        .reduce(|| Tally::new(m), Tally::merge);

    let sc_iou = (t.union > 0).then(|| t.inter as f64 / t.union as f64);
    let defined: Vec<f64> = t.classes.iter().skip(1).filter_map(ClassTally::iou).collect();
    let ssc_miou = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(OccEvalReport {
        occupied_intersection: t.inter,
        occupied_union: t.union,
        sc_iou,
        per_class: t.classes,
        ssc_miou,
    })
}
