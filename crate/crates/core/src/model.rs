use crate::graph::Triple;
use crate::manifold::{GradientBundle, ModelSpec, TripleVectors};
use crate::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                left: rows * cols,
                right: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| norm(self.row(i)))
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Slack above norm one that projection tolerates. A projected row can land
/// a few ulps outside the ball; without the slack a second projection would
/// move it again and projecting would not be idempotent.
pub const PROJECTION_SLACK: f64 = 1e-12;

/// Rescales `v` onto the unit sphere when its norm exceeds one.
#[inline]
pub(crate) fn project_unit_ball(v: &mut [f64]) {
    let n = norm(v);
    if n > 1.0 + PROJECTION_SLACK {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Entity and relation parameters for one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub spec: ModelSpec,
    pub entities: Matrix,
    /// `r` (sphere, TransE) or `r_head` (hyperplane).
    pub relations: Matrix,
    /// `r_tail`, hyperplane only.
    pub relations_tail: Option<Matrix>,
    /// Unconstrained per-relation `D_r`.
    pub manifold_params: Vec<f64>,
}

impl EmbeddingModel {
    /// All-zero parameters with `D_r = 1`.
    pub fn zeros(spec: ModelSpec, entities: usize, relations: usize, dim: usize) -> Result<Self> {
        spec.validate()?;
        if dim == 0 {
            return Err(Error::Config(
                "embedding dimension must be at least 1".into(),
            ));
        }
        Ok(EmbeddingModel {
            spec,
            entities: Matrix::zeros(entities, dim),
            relations: Matrix::zeros(relations, dim),
            relations_tail: spec
                .has_tail_relation()
                .then(|| Matrix::zeros(relations, dim)),
            manifold_params: vec![1.0; relations],
        })
    }

    /// Checks tensor shapes and finiteness.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let d = self.dim();
        let r = self.relations.rows();
        if self.relations.cols() != d {
            return Err(Error::DimensionMismatch {
                left: d,
                right: self.relations.cols(),
            });
        }
        match (&self.relations_tail, self.spec.has_tail_relation()) {
            (Some(m), true) if m.rows() != r || m.cols() != d => {
                return Err(Error::DimensionMismatch {
                    left: r * d,
                    right: m.rows() * m.cols(),
                })
            }
            (None, true) | (Some(_), false) => {
                return Err(Error::Config(
                    "r_tail presence does not match the manifold".into(),
                ))
            }
            _ => {}
        }
        if self.manifold_params.len() != r {
            return Err(Error::DimensionMismatch {
                left: r,
                right: self.manifold_params.len(),
            });
        }
        if !self.parameters().all(f64::is_finite) {
            return Err(Error::Domain("model has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.entities.cols()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.rows()
    }

    /// Every parameter in checkpoint order.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.entities
            .as_slice()
            .iter()
            .chain(self.relations.as_slice())
            .chain(self.relations_tail.iter().flat_map(|m| m.as_slice()))
            .chain(&self.manifold_params)
            .copied()
    }

    pub fn check(&self, t: &Triple) -> Result<()> {
        let e = self.num_entities();
        for index in [t.head, t.tail] {
            if index >= e {
                return Err(Error::OutOfBounds {
                    what: "entity",
                    index,
                    len: e,
                });
            }
        }
        if t.relation >= self.num_relations() {
            return Err(Error::OutOfBounds {
                what: "relation",
                index: t.relation,
                len: self.num_relations(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn vectors(&self, head: usize, relation: usize, tail: usize) -> TripleVectors<'_> {
        TripleVectors {
            head: self.entities.row(head),
            relation: self.relations.row(relation),
            relation_tail: self.relations_tail.as_ref().map(|m| m.row(relation)),
            tail: self.entities.row(tail),
            manifold_param: self.manifold_params[relation],
        }
    }

    /// Score of `triple`; smaller is more plausible.
    pub fn score(&self, triple: &Triple) -> Result<f64> {
        self.check(triple)?;
        Ok(self.score_unchecked(triple))
    }

    /// Panics on out-of-range indices.
    #[inline]
    pub fn score_unchecked(&self, t: &Triple) -> f64 {
        self.spec
            .score_vectors(&self.vectors(t.head, t.relation, t.tail))
    }

    pub fn manifold_value(&self, triple: &Triple) -> Result<f64> {
        self.check(triple)?;
        Ok(self
            .spec
            .manifold_value(&self.vectors(triple.head, triple.relation, triple.tail)))
    }

    pub fn score_gradients(&self, triple: &Triple) -> Result<GradientBundle> {
        self.check(triple)?;
        let mut out = GradientBundle::new(self.dim(), self.spec.has_tail_relation());
        self.spec.score_gradients_vectors(
            &self.vectors(triple.head, triple.relation, triple.tail),
            &mut out,
        );
        Ok(out)
    }

    /// The same parameters scored under another spec; `r_tail` must be
    /// compatible.
    pub fn with_spec(&self, spec: ModelSpec) -> Result<Self> {
        let mut m = self.clone();
        m.spec = spec;
        m.validate()?;
        Ok(m)
    }

    pub fn project_entities(&mut self) {
        for i in 0..self.entities.rows() {
            project_unit_ball(self.entities.row_mut(i));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;

    #[test]
    fn score_checks_bounds() {
        let m = EmbeddingModel::zeros(ModelSpec::sphere(Kernel::Linear), 3, 1, 2).unwrap();
        assert!(m.score(&Triple::new(0, 0, 2)).is_ok());
        assert!(matches!(
            m.score(&Triple::new(3, 0, 0)),
            Err(Error::OutOfBounds { what: "entity", .. })
        ));
        assert!(matches!(
            m.score(&Triple::new(0, 1, 0)),
            Err(Error::OutOfBounds {
                what: "relation",
                ..
            })
        ));
    }

    #[test]
    fn zero_model_scores() {
        // M = 0, D = 1 → (0 − 1)² = 1
        let m = EmbeddingModel::zeros(ModelSpec::sphere(Kernel::Linear), 2, 1, 3).unwrap();
        assert_eq!(m.score(&Triple::new(0, 0, 1)).unwrap(), 1.0);
        let h =
            EmbeddingModel::zeros(ModelSpec::hyperplane(Kernel::Linear, false), 2, 1, 3).unwrap();
        assert!(h.relations_tail.is_some());
        assert_eq!(h.score(&Triple::new(0, 0, 1)).unwrap(), 1.0);
        let t = EmbeddingModel::zeros(ModelSpec::transe(), 2, 1, 3).unwrap();
        assert_eq!(t.score(&Triple::new(0, 0, 1)).unwrap(), 0.0);
    }

    #[test]
    fn validate_catches_non_finite() {
        let mut m = EmbeddingModel::zeros(ModelSpec::sphere(Kernel::Linear), 2, 1, 3).unwrap();
        m.validate().unwrap();
        m.manifold_params[0] = f64::NAN;
        assert!(m.validate().is_err());
        assert!(m
            .with_spec(ModelSpec::hyperplane(Kernel::Linear, false))
            .is_err());
    }

    #[test]
    fn projection() {
        let mut m = EmbeddingModel::zeros(ModelSpec::transe(), 2, 1, 2).unwrap();
        m.entities.row_mut(0).copy_from_slice(&[3.0, 4.0]);
        m.entities.row_mut(1).copy_from_slice(&[0.3, 0.4]);
        m.project_entities();
        assert_eq!(m.entities.row(0), &[0.6, 0.8]);
        assert_eq!(m.entities.row(1), &[0.3, 0.4]);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut m = EmbeddingModel::zeros(ModelSpec::transe(), 50, 1, 7).unwrap();
        for (i, x) in m.entities.as_mut_slice().iter_mut().enumerate() {
            *x = ((i * 7919) % 113) as f64 / 13.0 - 4.0;
        }
        m.project_entities();
        let once = m.clone();
        m.project_entities();
        assert_eq!(m, once);
    }
}
