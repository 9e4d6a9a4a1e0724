//! Regression and ranking metrics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

fn check_pair(y: &[f64], yhat: &[f64], needed: usize) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch(y.len(), yhat.len()));
    }
    if y.len() < needed {
        return Err(Error::TooFewSamples { needed, got: y.len() });
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 1)?;
    let s: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 1)?;
    let s: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / y.len() as f64)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Centered second moments `(Sxx, Syy, Sxy)` by the two-pass method.
fn moments(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (sxx, syy, sxy)
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Product-moment correlation.
pub fn pearson(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 2)?;
    if is_constant(y) {
        return Err(Error::ConstantInput("labels"));
    }
    if is_constant(yhat) {
        return Err(Error::ConstantInput("predictions"));
    }
    let (sxx, syy, sxy) = moments(y, yhat);
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Residual standard deviation of the least-squares fit `y ≈ a + b·ŷ`, with
/// an `n − 1` denominator.
pub fn sd_regression(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 3)?;
    if is_constant(yhat) {
        return Err(Error::ConstantInput("predictions"));
    }
    let (sxx, _, sxy) = moments(yhat, y);
    let b = sxy / sxx;
    let a = mean(y) - b * mean(yhat);
    let ss: f64 = y.iter().zip(yhat).map(|(yi, xi)| (yi - (a + b * xi)).powi(2)).sum();
    Ok((ss / (y.len() - 1) as f64).sqrt())
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation. Without ties this is `1 − 6Σd²/(n(n²−1))` evaluated in
/// integers, which is exact; with ties it is the Pearson correlation of
/// average ranks.
pub fn spearman(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 2)?;
    let (ry, rp) = (average_ranks(y), average_ranks(yhat));
    let tied = |r: &[f64]| r.iter().any(|v| v.fract() != 0.0) || has_duplicates(r);
    if tied(&ry) || tied(&rp) {
        return pearson(&ry, &rp);
    }
    let d2: u128 = ry.iter().zip(&rp).map(|(a, b)| ((a - b).abs() as u128).pow(2)).sum();
    let n = y.len() as u128;
    Ok(1.0 - (6 * d2) as f64 / (n * (n * n - 1)) as f64)
}

fn has_duplicates(ranks: &[f64]) -> bool {
    let mut seen = vec![false; ranks.len() + 1];
    ranks.iter().any(|r| std::mem::replace(&mut seen[*r as usize], true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMember {
    pub complex_id: String,
    pub affinity: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub target_id: String,
    pub members: Vec<ClusterMember>,
}

impl Cluster {
    pub fn spearman(&self) -> Result<f64> {
        if self.members.len() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: self.members.len() });
        }
        let mut ids = BTreeSet::new();
        if let Some(dup) = self.members.iter().find(|m| !ids.insert(&m.complex_id)) {
            return Err(Error::Dataset(format!("cluster `{}` lists `{}` twice", self.target_id, dup.complex_id)));
        }
        let y: Vec<f64> = self.members.iter().map(|m| m.affinity).collect();
        let p: Vec<f64> = self.members.iter().map(|m| m.predicted).collect();
        spearman(&y, &p)
    }
}

/// Unweighted mean of per-cluster Spearman coefficients.
pub fn ranking_power(clusters: &[Cluster]) -> Result<f64> {
    if clusters.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut s = 0.0;
    for c in clusters {
        s += c.spearman()?;
    }
    Ok(s / clusters.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    pub sd: f64,
    pub pearson: f64,
}

impl MetricsReport {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self> {
        Ok(Self {
            n: y.len(),
            rmse: rmse(y, yhat)?,
            mae: mae(y, yhat)?,
            sd: sd_regression(y, yhat)?,
            pearson: pearson(y, yhat)?,
        })
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let _ = writeln!(s, "n,{}", self.n);
        let _ = writeln!(s, "rmse,{}", self.rmse);
        let _ = writeln!(s, "mae,{}", self.mae);
        let _ = writeln!(s, "sd,{}", self.sd);
        let _ = writeln!(s, "pearson,{}", self.pearson);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_mae_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert_eq!(mae(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 3.5);
        assert_eq!(rmse(&[1.0], &[-1.5]).unwrap(), 2.5);
        assert_eq!(mae(&[1.0], &[-1.5]).unwrap(), 2.5);
        assert!(rmse(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_extremes_and_constant() {
        let y = [1.0, 2.5, 3.0, 7.0];
        let up: Vec<f64> = y.iter().map(|v| 2.0 * v + 1.0).collect();
        let down: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((pearson(&y, &up).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&y, &down).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&y, &[2.0; 4]), Err(Error::ConstantInput(_))));
    }

    #[test]
    fn sd_closed_form() {
        let sd = sd_regression(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap();
        assert!((sd - 0.5).abs() < 1e-15);
        assert!(sd_regression(&[0.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap() < 1e-15);
        assert!(sd_regression(&[0.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap() - 0.9).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    fn cluster(id: &str, y: &[f64], p: &[f64]) -> Cluster {
        Cluster {
            target_id: id.into(),
            members: y
                .iter()
                .zip(p)
                .enumerate()
                .map(|(i, (a, b))| ClusterMember {
                    complex_id: format!("{id}-{i}"),
                    affinity: *a,
                    predicted: *b,
                })
                .collect(),
        }
    }

    #[test]
    fn ranking_power_averages() {
        let a = cluster("a", &[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3]);
        let b = cluster("b", &[1.0, 2.0, 3.0], &[0.3, 0.2, 0.1]);
        assert!((ranking_power(&[a.clone(), a.clone()]).unwrap() - 1.0).abs() < 1e-12);
        assert!((ranking_power(&[a, b]).unwrap() - 0.0).abs() < 1e-12);
        let two = cluster("c", &[1.0, 2.0], &[5.0, 6.0]);
        assert!((ranking_power(&[two]).unwrap() - 1.0).abs() < 1e-12);
        let tied = cluster("d", &[1.0, 1.0], &[5.0, 6.0]);
        assert!(ranking_power(&[tied]).is_err());
        assert!(ranking_power(&[]).is_err());
    }
}
