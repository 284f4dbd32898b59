use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{complex_eigenvalues, ensure_finite, ensure_square, max_abs, Mat};

/// Serde adapter storing matrices as row-major nested arrays.
pub mod row_major {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> std::result::Result<Mat, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

/// `(A, B, C, D)` realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    #[serde(rename = "A", with = "row_major")]
    pub a: Mat,
    #[serde(rename = "B", with = "row_major")]
    pub b: Mat,
    #[serde(rename = "C", with = "row_major")]
    pub c: Mat,
    #[serde(rename = "D", with = "row_major", default = "empty")]
    pub d: Mat,
}

fn empty() -> Mat {
    Mat::zeros(0, 0)
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let sys = Self { a, b, c, d };
        sys.validate()?;
        Ok(sys)
    }

    /// Strictly proper realization `(A, B, C, 0)`.
    pub fn strictly_proper(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let d = Mat::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d)
    }

    /// Normalizes an omitted `D` (deserialized as 0x0) and checks shapes.
    pub fn validate(&self) -> Result<()> {
        let n = ensure_square(&self.a)?;
        if self.b.nrows() != n || self.c.ncols() != n {
            return Err(Error::Dimension(format!(
                "A is {n}x{n} but B is {}x{} and C is {}x{}",
                self.b.nrows(),
                self.b.ncols(),
                self.c.nrows(),
                self.c.ncols()
            )));
        }
        let d_ok = (self.d.nrows() == self.c.nrows() && self.d.ncols() == self.b.ncols())
            || self.d.is_empty();
        if !d_ok {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                self.d.nrows(),
                self.d.ncols(),
                self.c.nrows(),
                self.b.ncols()
            )));
        }
        for (m, what) in [
            (&self.a, "A"),
            (&self.b, "B"),
            (&self.c, "C"),
            (&self.d, "D"),
        ] {
            ensure_finite(m, what)?;
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn has_feedthrough(&self) -> bool {
        self.d.iter().any(|v| *v != 0.0)
    }

    /// `G(s) = C (sI - A)⁻¹ B + D` at a complex frequency.
    pub fn transfer_at(&self, s: Complex<f64>) -> Result<DMatrix<Complex<f64>>> {
        let n = self.states();
        let mut resolvent = self.a.map(|v| Complex::new(-v, 0.0));
        for i in 0..n {
            resolvent[(i, i)] += s;
        }
        let bc = self.b.map(|v| Complex::new(v, 0.0));
        let x = resolvent
            .lu()
            .solve(&bc)
            .ok_or_else(|| Error::Solver(format!("sI - A singular at s = {s}")))?;
        let mut g = self.c.map(|v| Complex::new(v, 0.0)) * x;
        if !self.d.is_empty() {
            g += self.d.map(|v| Complex::new(v, 0.0));
        }
        Ok(g)
    }
}

/// Generalized plant with disturbance/performance and control/measurement channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantData", into = "PlantData")]
pub struct Plant {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d12: Mat,
    pub d21: Mat,
}

#[derive(Serialize, Deserialize)]
struct PlantData {
    #[serde(rename = "A", with = "row_major")]
    a: Mat,
    #[serde(rename = "B1", with = "row_major")]
    b1: Mat,
    #[serde(rename = "B2", with = "row_major")]
    b2: Mat,
    #[serde(rename = "C1", with = "row_major")]
    c1: Mat,
    #[serde(rename = "C2", with = "row_major")]
    c2: Mat,
    #[serde(rename = "D12", with = "row_major")]
    d12: Mat,
    #[serde(rename = "D21", with = "row_major")]
    d21: Mat,
}

impl TryFrom<PlantData> for Plant {
    type Error = Error;
    fn try_from(p: PlantData) -> Result<Self> {
        Plant::new(p.a, p.b1, p.b2, p.c1, p.c2, p.d12, p.d21)
    }
}

impl From<Plant> for PlantData {
    fn from(p: Plant) -> Self {
        PlantData {
            a: p.a,
            b1: p.b1,
            b2: p.b2,
            c1: p.c1,
            c2: p.c2,
            d12: p.d12,
            d21: p.d21,
        }
    }
}

/// Relative tolerance for rank decisions in the PBH test.
const PBH_TOL: f64 = 1e-9;

impl Plant {
    /// Builds a plant and checks dimensions, `D21·B1ᵀ = 0`, and
    /// stabilizability / detectability of the control channel.
    pub fn new(a: Mat, b1: Mat, b2: Mat, c1: Mat, c2: Mat, d12: Mat, d21: Mat) -> Result<Self> {
        let plant = Self::new_unchecked(a, b1, b2, c1, c2, d12, d21)?;
        plant.check_structure()?;
        if !plant.is_stabilizable()? {
            return Err(Error::PlantAssumption("(A, B2) is not stabilizable".into()));
        }
        if !plant.is_detectable()? {
            return Err(Error::PlantAssumption("(A, C2) is not detectable".into()));
        }
        Ok(plant)
    }

    /// Dimension checks only.
    pub fn new_unchecked(
        a: Mat,
        b1: Mat,
        b2: Mat,
        c1: Mat,
        c2: Mat,
        d12: Mat,
        d21: Mat,
    ) -> Result<Self> {
        let n = ensure_square(&a)?;
        let (p, m, q) = (b1.ncols(), b2.ncols(), c1.nrows());
        let checks = [
            (b1.nrows() == n, "B1 rows"),
            (b2.nrows() == n, "B2 rows"),
            (c1.ncols() == n, "C1 columns"),
            (c2.ncols() == n, "C2 columns"),
            (c2.nrows() == m, "C2 rows must equal B2 columns (square control channel)"),
            (d12.nrows() == q && d12.ncols() == m, "D12 shape"),
            (d21.nrows() == m && d21.ncols() == p, "D21 shape"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::Dimension(what.to_string()));
            }
        }
        for (mat, what) in [
            (&a, "A"),
            (&b1, "B1"),
            (&b2, "B2"),
            (&c1, "C1"),
            (&c2, "C2"),
            (&d12, "D12"),
            (&d21, "D21"),
        ] {
            ensure_finite(mat, what)?;
        }
        Ok(Self {
            a,
            b1,
            b2,
            c1,
            c2,
            d12,
            d21,
        })
    }

    fn check_structure(&self) -> Result<()> {
        let cross = &self.d21 * self.b1.transpose();
        let scale = 1.0 + max_abs(&self.d21) * max_abs(&self.b1);
        if max_abs(&cross) > 1e-12 * scale {
            return Err(Error::PlantAssumption(
                "D21·B1ᵀ must be zero".into(),
            ));
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    /// Number of control inputs (= measured outputs).
    pub fn controls(&self) -> usize {
        self.b2.ncols()
    }
    pub fn disturbances(&self) -> usize {
        self.b1.ncols()
    }
    pub fn performance_outputs(&self) -> usize {
        self.c1.nrows()
    }

    pub fn is_stabilizable(&self) -> Result<bool> {
        pbh_full_rank(&self.a, &self.b2, false)
    }

    pub fn is_detectable(&self) -> Result<bool> {
        pbh_full_rank(&self.a.transpose(), &self.c2.transpose(), false)
    }

    /// The control channel `u -> y` as a state-space system `(A, B2, C2, 0)`.
    pub fn control_channel(&self) -> StateSpace {
        StateSpace {
            a: self.a.clone(),
            b: self.b2.clone(),
            c: self.c2.clone(),
            d: Mat::zeros(self.c2.nrows(), self.b2.ncols()),
        }
    }
}

/// PBH rank test of `[λI - A, B]` over eigenvalues with `Re λ ≥ 0`
/// (or all eigenvalues when `all_modes`).
pub(crate) fn pbh_full_rank(a: &Mat, b: &Mat, all_modes: bool) -> Result<bool> {
    let n = a.nrows();
    let scale = 1.0 + a.norm() + b.norm();
    for lambda in complex_eigenvalues(a)? {
        if !all_modes && lambda.re < -1e-9 * scale {
            continue;
        }
        let mut m = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = Complex::new(-a[(i, j)], 0.0);
            }
            m[(i, i)] += lambda;
            for j in 0..b.ncols() {
                m[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let sv = m.singular_values();
        let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if sv.len() < n || smallest <= PBH_TOL * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Strictly proper dynamic output-feedback controller `(Â, B̂, Ĉ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControllerData", into = "ControllerData")]
pub struct Controller {
    pub ahat: Mat,
    pub bhat: Mat,
    pub chat: Mat,
}

#[derive(Serialize, Deserialize)]
struct ControllerData {
    #[serde(rename = "Ahat", with = "row_major")]
    ahat: Mat,
    #[serde(rename = "Bhat", with = "row_major")]
    bhat: Mat,
    #[serde(rename = "Chat", with = "row_major")]
    chat: Mat,
}

impl TryFrom<ControllerData> for Controller {
    type Error = Error;
    fn try_from(c: ControllerData) -> Result<Self> {
        Controller::new(c.ahat, c.bhat, c.chat)
    }
}

impl From<Controller> for ControllerData {
    fn from(c: Controller) -> Self {
        ControllerData {
            ahat: c.ahat,
            bhat: c.bhat,
            chat: c.chat,
        }
    }
}

impl Controller {
    pub fn new(ahat: Mat, bhat: Mat, chat: Mat) -> Result<Self> {
        let nc = ensure_square(&ahat)?;
        if bhat.nrows() != nc || chat.ncols() != nc || chat.nrows() != bhat.ncols() {
            return Err(Error::Dimension(format!(
                "controller blocks Ahat {nc}x{nc}, Bhat {}x{}, Chat {}x{}",
                bhat.nrows(),
                bhat.ncols(),
                chat.nrows(),
                chat.ncols()
            )));
        }
        ensure_finite(&ahat, "Ahat")?;
        ensure_finite(&bhat, "Bhat")?;
        ensure_finite(&chat, "Chat")?;
        Ok(Self { ahat, bhat, chat })
    }

    pub fn zero(nc: usize, m: usize) -> Self {
        Self {
            ahat: Mat::zeros(nc, nc),
            bhat: Mat::zeros(nc, m),
            chat: Mat::zeros(m, nc),
        }
    }

    pub fn order(&self) -> usize {
        self.ahat.nrows()
    }

    /// Input/output dimension.
    pub fn channels(&self) -> usize {
        self.bhat.ncols()
    }

    pub fn as_state_space(&self) -> StateSpace {
        StateSpace {
            a: self.ahat.clone(),
            b: self.bhat.clone(),
            c: self.chat.clone(),
            d: Mat::zeros(self.chat.nrows(), self.bhat.ncols()),
        }
    }
}
