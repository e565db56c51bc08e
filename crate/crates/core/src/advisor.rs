//! Budget analysis over learning curves: where an acquisition method starts
//! to beat random sampling for good, how that threshold scales with the
//! number of classes, and what budget to plan for a new dataset.

use serde::{Deserialize, Serialize};

use crate::acquisition::Method;
use crate::error::{Error, Result};
use crate::orchestrator::Mode;

/// Accuracy as a function of labeled-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub budgets: Vec<usize>,
    pub accuracies: Vec<f64>,
    pub method: Method,
    pub mode: Mode,
    /// Number of runs averaged into this curve.
    pub seeds: usize,
}

impl LearningCurve {
    pub fn new(budgets: Vec<usize>, accuracies: Vec<f64>, method: Method, mode: Mode) -> Result<Self> {
        if budgets.len() != accuracies.len() {
            return Err(Error::LengthMismatch(budgets.len(), accuracies.len()));
        }
        if budgets.is_empty() {
            return Err(Error::invalid("learning curve needs at least one point"));
        }
        if budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("learning curve budgets must be strictly increasing"));
        }
        if accuracies.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("learning curve accuracies must lie in [0, 1]"));
        }
        Ok(Self { budgets, accuracies, method, mode, seeds: 1 })
    }

    pub fn len(&self) -> usize {
        self.budgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.budgets.is_empty()
    }
}

/// Pointwise mean of curves that share a budget grid, method and mode.
pub fn average_curves(curves: &[LearningCurve]) -> Result<LearningCurve> {
    let first = curves.first().ok_or_else(|| Error::invalid("no curves to average"))?;
    let mut sums = vec![0.0; first.len()];
    let mut seeds = 0;
    for c in curves {
        if c.budgets != first.budgets {
            return Err(Error::MismatchedGrids);
        }
        if c.method != first.method || c.mode != first.mode {
            return Err(Error::invalid("cannot average curves of different method or mode"));
        }
        for (s, a) in sums.iter_mut().zip(&c.accuracies) {
            *s += a * c.seeds as f64;
        }
        seeds += c.seeds;
    }
    let accuracies = sums.into_iter().map(|s| s / seeds as f64).collect();
    Ok(LearningCurve { budgets: first.budgets.clone(), accuracies, method: first.method, mode: first.mode, seeds })
}

/// Smallest budget from which `al` stays at or above `random` at every
/// remaining grid point; `None` when `al` is behind at the last point.
pub fn find_crossover(al: &LearningCurve, random: &LearningCurve) -> Result<Option<usize>> {
    if al.budgets != random.budgets {
        return Err(Error::MismatchedGrids);
    }
    let mut start = None;
    for i in (0..al.len()).rev() {
        if al.accuracies[i] >= random.accuracies[i] {
            start = Some(i);
        } else {
            break;
        }
    }
    Ok(start.map(|i| al.budgets[i]))
}

/// Pearson product-moment correlation.
pub fn pearson_corr(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("pearson_corr needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Crossover budget normalized by class count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub num_classes: usize,
    pub samples_per_class: f64,
}

impl ThresholdPoint {
    pub fn from_crossover(budget: usize, num_classes: usize) -> Result<Self> {
        if num_classes == 0 || budget == 0 {
            return Err(Error::invalid("threshold point needs positive budget and class count"));
        }
        Ok(Self { num_classes, samples_per_class: budget as f64 / num_classes as f64 })
    }
}

/// Least-squares line `samples_per_class = slope * num_classes + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Zero when every point has the same samples-per-class value.
    pub pearson_r: f64,
    /// Smallest and largest class count among the fitted points.
    pub class_range: (usize, usize),
}

pub fn fit_threshold_line(points: &[ThresholdPoint]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::invalid("need at least two threshold points"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.num_classes as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.samples_per_class).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("degenerate fit: all points share one class count"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let pearson_r = match pearson_corr(&xs, &ys) {
        Ok(r) => r,
        Err(Error::ZeroVariance) => 0.0,
        Err(e) => return Err(e),
    };
    let lo = points.iter().map(|p| p.num_classes).min().unwrap();
    let hi = points.iter().map(|p| p.num_classes).max().unwrap();
    Ok(LineFit { slope, intercept, pearson_r, class_range: (lo, hi) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Advice {
    pub samples_per_class: f64,
    pub total_budget: usize,
    /// The queried class count lies outside the fitted range.
    pub extrapolated: bool,
}

/// Minimum budget above which active learning is expected to pay off.
pub fn advise_budget(fit: &LineFit, num_classes: usize) -> Result<Advice> {
    if num_classes < 2 {
        return Err(Error::invalid("advise_budget needs at least two classes"));
    }
    if !(fit.slope.is_finite() && fit.intercept.is_finite()) {
        return Err(Error::NonFinite("line fit"));
    }
    let spc = (fit.slope * num_classes as f64 + fit.intercept).max(1.0);
    let total = (num_classes as f64 * spc).ceil() as usize;
    let (lo, hi) = fit.class_range;
    Ok(Advice { samples_per_class: spc, total_budget: total, extrapolated: num_classes < lo || num_classes > hi })
}
