use crate::error::{FlrError, Result};
use crate::geometry::Vec3;

/// Resolution of the periodic grid on the unit torus `T² × T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

impl GridSpec {
    /// All resolutions must be even and at least 4.
    pub fn new(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        for (name, n) in [("n1", n1), ("n2", n2), ("n3", n3)] {
            if n < 4 || n % 2 != 0 {
                return Err(FlrError::InvalidArgument(format!(
                    "grid resolution {name} = {n} must be even and >= 4"
                )));
            }
        }
        Ok(GridSpec { n1, n2, n3 })
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// Flat index, `x1` fastest.
    #[inline]
    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        i1 + self.n1 * (i2 + self.n2 * i3)
    }

    /// Node coordinates `(i1/n1, i2/n2, i3/n3)` of a flat index.
    pub fn node(&self, idx: usize) -> Vec3 {
        let i1 = idx % self.n1;
        let i2 = (idx / self.n1) % self.n2;
        let i3 = idx / (self.n1 * self.n2);
        [
            i1 as f64 / self.n1 as f64,
            i2 as f64 / self.n2 as f64,
            i3 as f64 / self.n3 as f64,
        ]
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.n1, self.n2, self.n3]
    }
}

/// Node samples of a scalar on the periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        ScalarField {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(FlrError::InvalidArgument(format!(
                "expected {} grid values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(ScalarField { spec, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(spec: GridSpec, f: impl Fn(Vec3) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(spec.node(i))).collect();
        ScalarField { spec, values }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        crate::ensemble::neumaier_sum(self.values.iter().copied()) / self.values.len() as f64
    }

    /// `∫ u² dx` by node quadrature.
    pub fn integral_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.spec.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn scaled(&self, factor: f64) -> ScalarField {
        ScalarField {
            spec: self.spec,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Three scalar components `(E1, E2, E_par)` on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub comps: [ScalarField; 3],
}

impl VectorField {
    pub fn zeros(spec: GridSpec) -> Self {
        VectorField {
            comps: [
                ScalarField::zeros(spec),
                ScalarField::zeros(spec),
                ScalarField::zeros(spec),
            ],
        }
    }

    pub fn new(comps: [ScalarField; 3]) -> Result<Self> {
        let spec = comps[0].spec();
        if comps.iter().any(|c| c.spec() != spec) {
            return Err(FlrError::InvalidArgument(
                "vector field components must share one grid".into(),
            ));
        }
        Ok(VectorField { comps })
    }

    pub fn spec(&self) -> GridSpec {
        self.comps[0].spec()
    }

    /// Uniform field with value `e` everywhere.
    pub fn uniform(spec: GridSpec, e: Vec3) -> Self {
        VectorField {
            comps: e.map(|c| ScalarField::from_fn(spec, |_| c)),
        }
    }

    pub fn max_abs_perp(&self) -> f64 {
        self.comps[0]
            .values()
            .iter()
            .zip(self.comps[1].values())
            .fold(0.0, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }
}
