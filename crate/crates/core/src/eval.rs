//! Quantitative comparison of predictions against ground truth.
//!
//! The headline metric is nRMSE: for every (sample, variable, timestep)
//! after the history window, the l2 norm of the error over all grid cells
//! divided by the l2 norm of the ground truth, averaged over the triple
//! sum. Zero-norm ground-truth frames are excluded with a warning instead
//! of producing infinities.

use std::io::Write;
use std::path::Path;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::field::FieldSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub sample: usize,
    pub var: String,
    pub timestep: usize,
    pub term: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub aggregate: f64,
    /// Mean term per timestep (over samples and variables).
    pub per_timestep: Vec<(usize, f64)>,
    pub per_var: Vec<(String, f64)>,
    pub per_sample: Vec<f64>,
    pub rows: Vec<EvalRow>,
    pub n_test: usize,
    pub n_var: usize,
    pub n_t: usize,
    pub th: usize,
    pub excluded_terms: usize,
    pub warnings: Vec<String>,
}

fn l2(values: &[f32]) -> f64 {
    values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

fn l2_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Shared Eq.-style accounting: build the report from per-term rows. The
/// aggregate is the mean over included terms, and the per-timestep curve
/// re-averages to it exactly under the same weighting.
fn build_report(
    rows: Vec<EvalRow>,
    excluded: Vec<(usize, String, usize)>,
    n_test: usize,
    n_var: usize,
    n_t: usize,
    th: usize,
) -> EvalReport {
    let mut warnings = Vec::new();
    for (s, var, t) in &excluded {
        warnings.push(format!(
            "sample {s} var `{var}` t={t}: zero-norm ground truth, term excluded"
        ));
    }
    let mut agg_sum = 0.0;
    let mut per_t: Vec<(f64, usize)> = vec![(0.0, 0); n_t];
    let mut per_var_acc: std::collections::BTreeMap<String, (f64, usize)> = Default::default();
    let mut per_sample_acc = vec![(0.0f64, 0usize); n_test];
    for r in &rows {
        agg_sum += r.term;
        per_t[r.timestep].0 += r.term;
        per_t[r.timestep].1 += 1;
        let e = per_var_acc.entry(r.var.clone()).or_insert((0.0, 0));
        e.0 += r.term;
        e.1 += 1;
        per_sample_acc[r.sample].0 += r.term;
        per_sample_acc[r.sample].1 += 1;
    }
    let aggregate = agg_sum / rows.len().max(1) as f64;
    EvalReport {
        aggregate,
        per_timestep: per_t
            .into_iter()
            .enumerate()
            .filter(|(_, (_, c))| *c > 0)
            .map(|(t, (s, c))| (t, s / c as f64))
            .collect(),
        per_var: per_var_acc
            .into_iter()
            .map(|(v, (s, c))| (v, s / c.max(1) as f64))
            .collect(),
        per_sample: per_sample_acc
            .into_iter()
            .map(|(s, c)| s / c.max(1) as f64)
            .collect(),
        rows,
        n_test,
        n_var,
        n_t,
        th,
        excluded_terms: excluded.len(),
        warnings,
    }
}

fn check_pair(pred: &FieldSeries, gt: &FieldSeries) -> Result<()> {
    if pred.grid.extents != gt.grid.extents || pred.steps() != gt.steps() {
        return Err(Error::ShapeMismatch {
            context: format!("nrmse field `{}`", gt.name),
            expected: gt.grid.extents.clone(),
            actual: pred.grid.extents.clone(),
        });
    }
    Ok(())
}

/// nRMSE of predictions against ground truth, summing timesteps after the
/// history window (t in [th, N_t)). Samples are matched by index,
/// variables by name.
pub fn nrmse(pred: &[Vec<&FieldSeries>], gt: &[Vec<&FieldSeries>], th: usize) -> Result<EvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "prediction set has {} samples, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::invalid("nrmse needs at least one sample"));
    }
    let n_t = gt[0][0].steps();
    if th >= n_t {
        return Err(Error::invalid(format!(
            "history {th} leaves no timesteps to evaluate in a series of {n_t}"
        )));
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let n_var = gt[0].len();
    for (s, (ps, gs)) in pred.iter().zip(gt).enumerate() {
        for g in gs {
            let p = ps
                .iter()
                .find(|p| p.name == g.name)
                .ok_or_else(|| Error::invalid(format!("prediction missing field `{}`", g.name)))?;
            check_pair(p, g)?;
            for t in th..n_t {
                let gnorm = l2(g.frame(t));
                if gnorm == 0.0 {
                    excluded.push((s, g.name.clone(), t));
                    continue;
                }
                rows.push(EvalRow {
                    sample: s,
                    var: g.name.clone(),
                    timestep: t,
                    term: l2_diff(p.frame(t), g.frame(t)) / gnorm,
                });
            }
        }
    }
    Ok(build_report(rows, excluded, gt.len(), n_var, n_t, th))
}

/// nRMSE of the frozen-last-history-frame predictor: frame th-1 repeated
/// for every evaluated timestep. Same accounting as [`nrmse`].
pub fn persistence_baseline(gt: &[Vec<&FieldSeries>], th: usize) -> Result<EvalReport> {
    if gt.is_empty() {
        return Err(Error::invalid("persistence baseline needs at least one sample"));
    }
    if th == 0 {
        return Err(Error::invalid("persistence baseline needs th >= 1"));
    }
    let n_t = gt[0][0].steps();
    if th >= n_t {
        return Err(Error::invalid(format!(
            "history {th} leaves no timesteps to evaluate in a series of {n_t}"
        )));
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let n_var = gt[0].len();
    for (s, gs) in gt.iter().enumerate() {
        for g in gs {
            let frozen = g.frame(th - 1);
            for t in th..n_t {
                let gnorm = l2(g.frame(t));
                if gnorm == 0.0 {
                    excluded.push((s, g.name.clone(), t));
                    continue;
                }
                rows.push(EvalRow {
                    sample: s,
                    var: g.name.clone(),
                    timestep: t,
                    term: l2_diff(frozen, g.frame(t)) / gnorm,
                });
            }
        }
    }
    Ok(build_report(rows, excluded, gt.len(), n_var, n_t, th))
}

/// Solution-field views of a dataset list, for [`nrmse`].
pub fn solution_sets(samples: &[Dataset]) -> Vec<Vec<&FieldSeries>> {
    samples.iter().map(|d| d.solutions()).collect()
}

/// Per-timestep melt-pool depth of a 3-D temperature series: the maximal
/// contiguous run of z layers, counted downward from the top surface
/// (last z layer), in which any cell exceeds `t_melt`, times the cell
/// height.
pub fn melt_pool_depth(series: &FieldSeries, t_melt: f64) -> Result<Vec<f64>> {
    if series.grid.dims() != 3 {
        return Err(Error::invalid("melt-pool depth needs a 3-D series"));
    }
    let [nx, ny, nz] = [
        series.grid.extents[0],
        series.grid.extents[1],
        series.grid.extents[2],
    ];
    let dz = series.grid.lengths[2] / nz as f64;
    let mut out = Vec::with_capacity(series.steps());
    for t in 0..series.steps() {
        let frame = series.frame(t);
        let layer_exceeds = |z: usize| -> bool {
            for i in 0..nx {
                for j in 0..ny {
                    if frame[(i * ny + j) * nz + z] as f64 > t_melt {
                        return true;
                    }
                }
            }
            false
        };
        let mut layers = 0;
        for z in (0..nz).rev() {
            if layer_exceeds(z) {
                layers += 1;
            } else {
                break;
            }
        }
        out.push(layers as f64 * dz);
    }
    Ok(out)
}

/// One row per (sample, var, timestep) plus an aggregate footer; when a
/// baseline is given its aggregate is appended for side-by-side plots.
pub fn write_report_csv(
    path: &Path,
    report: &EvalReport,
    baseline: Option<&EvalReport>,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "sample,var,timestep,nrmse")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{}", r.sample, r.var, r.timestep, r.term)?;
    }
    writeln!(w, "aggregate,,,{}", report.aggregate)?;
    if let Some(b) = baseline {
        writeln!(w, "baseline_aggregate,,,{}", b.aggregate)?;
    }
    Ok(())
}

/// Error-vs-time curves for plotting.
pub fn write_per_timestep_csv(
    path: &Path,
    report: &EvalReport,
    baseline: Option<&EvalReport>,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "timestep,nrmse,baseline_nrmse")?;
    for (t, v) in &report.per_timestep {
        let b = baseline
            .and_then(|b| b.per_timestep.iter().find(|(bt, _)| bt == t))
            .map(|(_, v)| v.to_string())
            .unwrap_or_default();
        writeln!(w, "{t},{v},{b}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldRole, GridSpec};

    fn series(name: &str, frames: Vec<Vec<f32>>) -> FieldSeries {
        let cells = frames[0].len();
        // synthetic 1 x cells grids: keep cells >= 4 per extent rule
        let grid = GridSpec::new(
            vec![4, cells / 4],
            vec![1.0, 1.0],
            0.1,
            frames.len(),
        )
        .unwrap();
        FieldSeries::new(
            name,
            FieldRole::Solution,
            grid,
            "1",
            frames.concat(),
        )
        .unwrap()
    }

    fn frames_of(values: &[&[f32]]) -> Vec<Vec<f32>> {
        values.iter().map(|v| v.to_vec()).collect()
    }

    #[test]
    fn exact_match_scores_zero() {
        let g = series("u", frames_of(&[&[1.0; 16], &[2.0; 16], &[3.0; 16]]));
        let r = nrmse(&[vec![&g]], &[vec![&g]], 1).unwrap();
        assert_eq!(r.aggregate, 0.0);
    }

    #[test]
    fn doubled_prediction_scores_one() {
        let g = series("u", frames_of(&[&[1.0; 16], &[2.0; 16], &[3.0; 16]]));
        let doubled: Vec<Vec<f32>> = (0..3).map(|t| g.frame(t).iter().map(|v| v * 2.0).collect()).collect();
        let p = series("u", doubled);
        let r = nrmse(&[vec![&p]], &[vec![&g]], 1).unwrap();
        assert_eq!(r.aggregate, 1.0);
    }

    #[test]
    fn hand_case_evaluates_to_0_3() {
        // 1 sample, 1 var, 2 eval steps; gt = [3,4,0,...] both steps
        // (norm 5); pred errors of l2 size 1 and 2 -> (1/2)(1/5 + 2/5)
        let mut gt_frame = vec![0.0f32; 16];
        gt_frame[0] = 3.0;
        gt_frame[1] = 4.0;
        let mut p1 = gt_frame.clone();
        p1[2] += 1.0; // error vector of l2 size 1, exact in f32
        let mut p2 = gt_frame.clone();
        p2[2] += 2.0; // size 2
        let g = series("u", vec![gt_frame.clone(), gt_frame.clone(), gt_frame.clone()]);
        let p = series("u", vec![gt_frame, p1, p2]);
        let r = nrmse(&[vec![&p]], &[vec![&g]], 1).unwrap();
        assert!((r.aggregate - 0.3).abs() < 1e-12, "got {}", r.aggregate);
    }

    #[test]
    fn metric_reports_the_same_value_under_common_scaling() {
        let f: [f32; 16] = [
            1.0, -2.0, 0.5, 3.0, 1.0, 0.0, 2.0, -1.0, 0.25, -0.5, 1.5, 0.0, 2.5, -3.0, 0.75, 1.0,
        ];
        let g = series("u", frames_of(&[&f, &f, &f]));
        let p_frames: Vec<Vec<f32>> = (0..3)
            .map(|t| g.frame(t).iter().map(|v| v + 0.25).collect())
            .collect();
        let p = series("u", p_frames);
        let base = nrmse(&[vec![&p]], &[vec![&g]], 1).unwrap().aggregate;
        let scale = |s: &FieldSeries, a: f32| {
            series("u", (0..3).map(|t| s.frame(t).iter().map(|v| v * a).collect()).collect())
        };
        let (ps, gs) = (scale(&p, -2.5), scale(&g, -2.5));
        let scaled = nrmse(&[vec![&ps]], &[vec![&gs]], 1).unwrap().aggregate;
        assert!((base - scaled).abs() <= 1e-12 * base.abs());
    }

    #[test]
    fn per_timestep_curve_reaverages_to_the_aggregate() {
        let g = series("u", frames_of(&[&[1.0; 16], &[2.0; 16], &[4.0; 16], &[8.0; 16]]));
        let p_frames: Vec<Vec<f32>> = (0..4)
            .map(|t| g.frame(t).iter().map(|v| v * (1.0 + 0.1 * t as f32)).collect())
            .collect();
        let p = series("u", p_frames);
        let r = nrmse(&[vec![&p]], &[vec![&g]], 1).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (t, v) in &r.per_timestep {
            let count = r.rows.iter().filter(|row| row.timestep == *t).count() as f64;
            num += v * count;
            den += count;
        }
        let re = (num / den - r.aggregate).abs() / r.aggregate.max(1e-300);
        assert!(re < 1e-12, "rel err {re}");
    }

    #[test]
    fn zero_norm_frames_are_excluded_with_a_warning() {
        let g = series("u", frames_of(&[&[1.0; 16], &[0.0; 16], &[2.0; 16]]));
        let p = series("u", frames_of(&[&[1.0; 16], &[1.0; 16], &[2.0; 16]]));
        let r = nrmse(&[vec![&p]], &[vec![&g]], 1).unwrap();
        assert_eq!(r.excluded_terms, 1);
        assert_eq!(r.rows.len(), 1);
        assert!(r.aggregate.is_finite());
        assert!(r.warnings[0].contains("zero-norm"));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = [1.0f32; 16];
        let b = [1.0f32; 20];
        let g = series("u", frames_of(&[&a, &a, &a]));
        let p = series("u", frames_of(&[&b, &b, &b]));
        assert!(nrmse(&[vec![&p]], &[vec![&g]], 1).is_err());
    }

    #[test]
    fn persistence_on_constant_series_is_zero() {
        let a = [2.0f32; 16];
        let g = series("u", frames_of(&[&a, &a, &a, &a]));
        let r = persistence_baseline(&[vec![&g]], 2).unwrap();
        assert_eq!(r.aggregate, 0.0);
    }

    #[test]
    fn persistence_on_doubling_series_matches_closed_form() {
        // gt_t = 2^t * F with F = [3,4,...]; baseline repeats frame th-1,
        // so term(t) = 1 - 2^(th-1-t)
        let th = 2usize;
        let n_t = 6usize;
        let mut base = vec![0.0f32; 16];
        base[0] = 3.0;
        base[1] = 4.0;
        let frames: Vec<Vec<f32>> = (0..n_t)
            .map(|t| base.iter().map(|v| v * (1u32 << t) as f32).collect())
            .collect();
        let g = series("u", frames);
        let r = persistence_baseline(&[vec![&g]], th).unwrap();
        let expect: f64 = (th..n_t)
            .map(|t| 1.0 - 2.0f64.powi(th as i32 - 1 - t as i32))
            .sum::<f64>()
            / (n_t - th) as f64;
        assert!((r.aggregate - expect).abs() < 1e-15, "got {} want {expect}", r.aggregate);
    }

    #[test]
    fn baseline_and_model_share_accounting() {
        let g = series("u", frames_of(&[&[1.0; 16], &[2.0; 16], &[3.0; 16]]));
        // a model that predicts the frozen frame scores exactly the baseline
        let frozen = series("u", frames_of(&[&[1.0; 16], &[1.0; 16], &[1.0; 16]]));
        let model = nrmse(&[vec![&frozen]], &[vec![&g]], 1).unwrap();
        let base = persistence_baseline(&[vec![&g]], 1).unwrap();
        assert_eq!(model.aggregate, base.aggregate);
        assert_eq!(model.rows.len(), base.rows.len());
    }

    fn temp_series(layers_above: &[Vec<usize>], nz: usize, lz: f64) -> FieldSeries {
        // 4x4 x nz grid; `layers_above[t]` lists z layers holding a hot cell
        let grid = GridSpec::new(vec![4, 4, nz], vec![1.0, 1.0, lz], 0.1, layers_above.len()).unwrap();
        let mut values = vec![0.0f32; layers_above.len() * 16 * nz];
        for (t, layers) in layers_above.iter().enumerate() {
            for &z in layers {
                values[t * 16 * nz + (2 * 4 + 1) * nz + z] = 10.0;
            }
        }
        FieldSeries::new("T", FieldRole::Solution, grid, "K", values).unwrap()
    }

    #[test]
    fn melt_pool_depth_counts_contiguous_layers_from_the_top() {
        let nz = 4;
        let dz = 0.8 / nz as f64;
        let s = temp_series(
            &[
                vec![],           // nothing melted
                vec![3],          // top layer only
                vec![1, 2, 3],    // top three layers
                vec![1, 3],       // gap: only the top layer is contiguous
            ],
            nz,
            0.8,
        );
        let depth = melt_pool_depth(&s, 5.0).unwrap();
        assert_eq!(depth[0], 0.0);
        assert!((depth[1] - dz).abs() < 1e-12);
        assert!((depth[2] - 3.0 * dz).abs() < 1e-12);
        assert!((depth[3] - dz).abs() < 1e-12);
    }

    #[test]
    fn csv_reports_have_rows_and_footer() {
        let dir = tempfile::tempdir().unwrap();
        let g = series("u", frames_of(&[&[1.0; 16], &[2.0; 16], &[3.0; 16]]));
        let p = series("u", frames_of(&[&[1.0; 16], &[2.5; 16], &[3.5; 16]]));
        let r = nrmse(&[vec![&p]], &[vec![&g]], 1).unwrap();
        let b = persistence_baseline(&[vec![&g]], 1).unwrap();
        let path = dir.path().join("report.csv");
        write_report_csv(&path, &r, Some(&b)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample,var,timestep,nrmse\n"));
        assert!(text.contains("\naggregate,,,"));
        assert!(text.contains("\nbaseline_aggregate,,,"));
        let curve = dir.path().join("curve.csv");
        write_per_timestep_csv(&curve, &r, Some(&b)).unwrap();
        let text = std::fs::read_to_string(&curve).unwrap();
        assert_eq!(text.lines().count(), 3); // header + t=1,2
    }
}
