//! Piecewise-linear finite elements on a mesh aligned with the measure's
//! breakpoints. Eigenvalues of the pencil `K - σM` are located by counting
//! negative pivots of its `LDLᵀ` factorisation and bisecting in `σ`.

use crate::error::{Error, Result};
use crate::measures::Measure;

use super::Boundary;

#[derive(Debug, Clone)]
pub struct FemMesh {
    nodes: Vec<f64>,
    densities: Vec<f64>,
}

impl FemMesh {
    /// Splits every interval of `mu` into equal elements no longer than `h`.
    pub fn new(mu: &Measure, h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::Config(format!("mesh width {h} must lie in (0, 1]")));
        }
        let estimate = (1.0 / h).ceil() + mu.num_intervals() as f64;
        if estimate > 5e7 {
            return Err(Error::Resource(format!("mesh width {h} needs about {estimate:e} elements")));
        }
        let mut nodes = vec![0.0];
        let mut densities = Vec::new();
        for i in 0..mu.num_intervals() {
            let (a, b, d) = mu.interval(i);
            let k = (((b - a) / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            for j in 1..=k {
                nodes.push(if j == k { b } else { a + (b - a) * j as f64 / k as f64 });
                densities.push(d);
            }
        }
        Ok(Self { nodes, densities })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_elements(&self) -> usize {
        self.densities.len()
    }

    /// Tridiagonal stiffness and mass on the free nodes:
    /// `(k_diag, k_off, m_diag, m_off)`.
    fn assemble(&self, boundary: Boundary) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.nodes.len();
        let mut kd = vec![0.0; n];
        let mut ko = vec![0.0; n - 1];
        let mut md = vec![0.0; n];
        let mut mo = vec![0.0; n - 1];
        for e in 0..self.num_elements() {
            let h = self.nodes[e + 1] - self.nodes[e];
            let d = self.densities[e];
            kd[e] += 1.0 / h;
            kd[e + 1] += 1.0 / h;
            ko[e] = -1.0 / h;
            md[e] += d * h / 3.0;
            md[e + 1] += d * h / 3.0;
            mo[e] = d * h / 6.0;
        }
        if boundary == Boundary::Dirichlet {
            kd = kd[1..n - 1].to_vec();
            md = md[1..n - 1].to_vec();
            ko = ko[1..n - 2].to_vec();
            mo = mo[1..n - 2].to_vec();
        }
        (kd, ko, md, mo)
    }
}

/// Number of eigenvalues of `K - σM` below `σ`.
fn count_below(kd: &[f64], ko: &[f64], md: &[f64], mo: &[f64], sigma: f64) -> usize {
    let mut count = 0;
    let mut pivot = 0.0;
    for i in 0..kd.len() {
        let a = kd[i] - sigma * md[i];
        pivot = if i == 0 {
            a
        } else {
            let b = ko[i - 1] - sigma * mo[i - 1];
            a - b * b / pivot
        };
        if pivot == 0.0 {
            pivot = -f64::EPSILON * (a.abs() + 1.0);
        }
        if pivot < 0.0 {
            count += 1;
        }
    }
    count
}

/// First `count` eigenvalues of the P1 discretisation with element width at
/// most `h`, following the indexing of the series solver (Neumann includes
/// `λ_0 = 0`). Ritz values, so each is an upper bound for the exact one.
pub fn fem_oracle(mu: &Measure, h: f64, count: usize, boundary: Boundary) -> Result<Vec<f64>> {
    let mesh = FemMesh::new(mu, h)?;
    let (kd, ko, md, mo) = mesh.assemble(boundary);
    if kd.is_empty() {
        return Err(Error::Resource("mesh has no free nodes".into()));
    }
    // M is positive definite on the nodes touching a charged element
    let rank = (0..md.len()).filter(|&i| md[i] > 0.0).count();
    if count > rank {
        return Err(Error::Resource(format!(
            "mesh supports only {rank} finite eigenvalues, {count} requested; refine h"
        )));
    }
    let mut hi = 1.0;
    while count_below(&kd, &ko, &md, &mo, hi) < count {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Inconsistent("eigenvalue upper bound diverged".into()));
        }
    }
    let mut out = Vec::with_capacity(count);
    let mut lo = -1.0;
    for k in 0..count {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if count_below(&kd, &ko, &md, &mo, mid) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        let v = 0.5 * (a + b);
        out.push(if boundary == Boundary::Neumann && k == 0 { v.max(0.0) } else { v });
        lo = a;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lebesgue_dirichlet_matches_closed_form() {
        // P1 on a uniform mesh: λ_h = 6(1 - cos(mπh)) / (h²(2 + cos(mπh)))
        let h = 1.0 / 64.0;
        let got = fem_oracle(&Measure::lebesgue(), h, 3, Boundary::Dirichlet).unwrap();
        for (k, v) in got.iter().enumerate() {
            let t = (k + 1) as f64 * PI * h;
            let exact = 6.0 * (1.0 - t.cos()) / (h * h * (2.0 + t.cos()));
            assert!((v - exact).abs() < 1e-9 * exact, "{v} vs {exact}");
        }
    }

    #[test]
    fn neumann_starts_at_zero() {
        let got = fem_oracle(&Measure::lebesgue(), 1.0 / 32.0, 2, Boundary::Neumann).unwrap();
        assert!(got[0].abs() < 1e-9);
        assert!(got[1] > PI * PI && got[1] < PI * PI * 1.01);
    }

    #[test]
    fn too_few_charged_nodes() {
        let mu = Measure::new(vec![0.0, 0.5, 1.0], vec![2.0, 0.0]).unwrap();
        assert!(matches!(
            fem_oracle(&mu, 0.5, 5, Boundary::Dirichlet),
            Err(Error::Resource(_))
        ));
    }
}
