use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Branch, BusId, GridCase};

/// Per-branch two-port admittances of the pi model.
#[derive(Debug, Clone, Copy)]
pub struct BranchAdmittance {
    pub ff: Complex64,
    pub ft: Complex64,
    pub tf: Complex64,
    pub tt: Complex64,
}

impl BranchAdmittance {
    pub fn of(branch: &Branch) -> Result<Self> {
        let z = Complex64::new(branch.r, branch.x);
        if z.norm_sqr() == 0.0 {
            return Err(Error::ZeroImpedance(branch.from, branch.to));
        }
        let ys = z.inv();
        let charging = Complex64::new(0.0, branch.b / 2.0);
        let t = branch.tap;
        Ok(BranchAdmittance {
            ff: (ys + charging) / (t * t),
            ft: -ys / t,
            tf: -ys / t,
            tt: ys + charging,
        })
    }
}

/// Bus admittance matrix in compressed row form.
///
/// Row and column order follow the bus order of the case it was built from.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    bus_ids: Vec<BusId>,
    /// Per row, `(column, value)` sorted by column with duplicates merged.
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn bus_ids(&self) -> &[BusId] {
        &self.bus_ids
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.rows[i][k].1)
            .unwrap_or_default()
    }

    pub fn row_sum(&self, i: usize) -> Complex64 {
        self.rows[i].iter().map(|&(_, v)| v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `Y * v`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, y)| y * v[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, y) in row {
                m[(i, j)] = y;
            }
        }
        m
    }
}

/// Assembles the bus admittance matrix from in-service branches and shunts.
pub fn build_admittance(case: &GridCase) -> Result<AdmittanceMatrix> {
    let n = case.buses().len();
    let mut triplets: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let base = case.base_mva();
    for (i, bus) in case.buses().iter().enumerate() {
        triplets[i].push((i, Complex64::new(bus.shunt_g, bus.shunt_b) / base));
    }
    for br in case.branches().iter().filter(|b| b.in_service) {
        let f = case.bus_index(br.from).ok_or(Error::UnknownBus(br.from))?;
        let t = case.bus_index(br.to).ok_or(Error::UnknownBus(br.to))?;
        let y = BranchAdmittance::of(br)?;
        triplets[f].push((f, y.ff));
        triplets[f].push((t, y.ft));
        triplets[t].push((f, y.tf));
        triplets[t].push((t, y.tt));
    }
    let rows = triplets
        .into_iter()
        .map(|mut row| {
            row.sort_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some((lc, lv)) if *lc == c => *lv += v,
                    _ => merged.push((c, v)),
                }
            }
            merged
        })
        .collect();
    Ok(AdmittanceMatrix {
        bus_ids: case.buses().iter().map(|b| b.id).collect(),
        rows,
    })
}
