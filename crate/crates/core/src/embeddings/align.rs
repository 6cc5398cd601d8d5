//! Orthogonal Procrustes alignment seeded by identically spelled words.

use std::collections::BTreeSet;

use serde::Serialize;

use super::EmbeddingTable;
use crate::linalg::{dot, norm, orthogonality_error, svd, Matrix};
use crate::par::Execution;
use crate::{Error, Result};

/// Word pairs assumed to be translations of each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedLexicon {
    pub pairs: Vec<(String, String)>,
}

impl SeedLexicon {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// A `dim × dim` orthogonal matrix applied to row vectors (`v ↦ vW`).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap {
    pub matrix: Matrix,
}

impl OrthogonalMap {
    pub fn identity(dim: usize) -> Self {
        OrthogonalMap {
            matrix: Matrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn inverse(&self) -> Self {
        OrthogonalMap {
            matrix: self.matrix.transpose(),
        }
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        self.matrix.matvec_t_add(v, out);
    }
}

/// Which space gets rotated onto the other.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Rotate the target-language table into the source space.
    #[default]
    TargetToSource,
    SourceToTarget,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target-to-source" | "target_to_source" => Ok(Direction::TargetToSource),
            "source-to-target" | "source_to_target" => Ok(Direction::SourceToTarget),
            _ => Err(Error::Config(format!("unknown alignment direction `{s}`"))),
        }
    }
}

/// Every word spelled identically (case-sensitive) in both vocabularies, in
/// lexicographic order.
pub fn mine_identical_seeds(src: &EmbeddingTable, tgt: &EmbeddingTable) -> Result<SeedLexicon> {
    let shared: BTreeSet<&str> = src.words().filter(|w| tgt.contains(w)).collect();
    if shared.is_empty() {
        return Err(Error::NoSeeds);
    }
    Ok(SeedLexicon {
        pairs: shared
            .into_iter()
            .map(|w| (w.to_string(), w.to_string()))
            .collect(),
    })
}

/// The orthogonal `W` minimizing `‖XW − Y‖_F`: `W = U Vᵀ` for
/// `XᵀY = U Σ Vᵀ`.
pub fn procrustes_align(x: &Matrix, y: &Matrix) -> Result<OrthogonalMap> {
    if x.rows != y.rows || x.cols != y.cols {
        return Err(Error::DimensionMismatch {
            expected: x.rows * x.cols,
            found: y.rows * y.cols,
        });
    }
    if x.data.iter().chain(&y.data).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Procrustes input".into()));
    }
    let cross = x.transpose().matmul(y);
    let dec = svd(&cross);
    let w = dec.u.matmul(&dec.v.transpose());
    debug_assert!(orthogonality_error(&w) < 1e-8);
    Ok(OrthogonalMap { matrix: w })
}

/// `‖XW − Y‖_F`
pub fn procrustes_loss(x: &Matrix, y: &Matrix, w: &Matrix) -> f64 {
    x.matmul(w).sub(y).frobenius_norm()
}

fn unit_rows(table: &EmbeddingTable, words: impl Iterator<Item = impl AsRef<str>>) -> Matrix {
    let rows: Vec<Vec<f64>> = words
        .map(|w| {
            let v = table.get(w.as_ref()).expect("seed word present");
            let n = norm(v);
            if n > 0.0 {
                v.iter().map(|x| x / n).collect()
            } else {
                v.to_vec()
            }
        })
        .collect();
    Matrix::from_rows(&rows)
}

/// Learns the rotation for `direction` from the seed pairs, using
/// unit-normalized copies of the seed vectors.
pub fn align_tables(
    src: &EmbeddingTable,
    tgt: &EmbeddingTable,
    seeds: &SeedLexicon,
    direction: Direction,
) -> Result<OrthogonalMap> {
    if seeds.is_empty() {
        return Err(Error::NoSeeds);
    }
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            found: tgt.dim(),
        });
    }
    let s = unit_rows(src, seeds.pairs.iter().map(|p| &p.0));
    let t = unit_rows(tgt, seeds.pairs.iter().map(|p| &p.1));
    match direction {
        Direction::TargetToSource => procrustes_align(&t, &s),
        Direction::SourceToTarget => procrustes_align(&s, &t),
    }
}

/// Rotates every vector (and the unknown-word vector) of `table`.
pub fn apply_mapping(table: &EmbeddingTable, map: &OrthogonalMap) -> Result<EmbeddingTable> {
    if table.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            found: table.dim(),
        });
    }
    Ok(table.map_vectors(|v, out| map.apply(v, out)))
}

/// The `k` nearest `space` words (by cosine) of each query vector.
pub fn nearest_neighbors(
    queries: &[&[f64]],
    space: &EmbeddingTable,
    k: usize,
    exec: Execution,
) -> Vec<Vec<(String, f64)>> {
    let norms: Vec<f64> = (0..space.len()).map(|i| norm(space.vector(i))).collect();
    exec.map(queries, |q| {
        let qn = norm(q);
        let mut scored: Vec<(usize, f64)> = (0..space.len())
            .map(|i| {
                let denom = qn * norms[i];
                let cos = if denom > 0.0 {
                    dot(q, space.vector(i)) / denom
                } else {
                    0.0
                };
                (i, cos)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(i, c)| (space.word(i).to_string(), c))
            .collect()
    })
}

/// Fraction of seed pairs whose mapped target vector has its source
/// counterpart as nearest neighbor.
pub fn seed_precision(
    mapped_tgt: &EmbeddingTable,
    src: &EmbeddingTable,
    seeds: &SeedLexicon,
    exec: Execution,
) -> f64 {
    if seeds.is_empty() {
        return 0.0;
    }
    let queries: Vec<&[f64]> = seeds
        .pairs
        .iter()
        .map(|(_, t)| mapped_tgt.lookup(t))
        .collect();
    let nn = nearest_neighbors(&queries, src, 1, exec);
    let hits = nn
        .iter()
        .zip(&seeds.pairs)
        .filter(|(n, (s, _))| n.first().is_some_and(|(w, _)| w == s))
        .count();
    hits as f64 / seeds.len() as f64
}

/// Summary printed by the `align` command.
#[derive(Debug, Clone, Serialize)]
pub struct AlignmentReport {
    pub direction: Direction,
    pub dim: usize,
    pub seeds: usize,
    pub orthogonality_error: f64,
    /// Procrustes loss on the normalized seed matrices before and after.
    pub seed_loss_before: f64,
    pub seed_loss_after: f64,
    pub seed_precision_at_1: f64,
}

impl AlignmentReport {
    pub fn build(
        src: &EmbeddingTable,
        tgt: &EmbeddingTable,
        seeds: &SeedLexicon,
        direction: Direction,
        map: &OrthogonalMap,
        exec: Execution,
    ) -> Result<Self> {
        let s = unit_rows(src, seeds.pairs.iter().map(|p| &p.0));
        let t = unit_rows(tgt, seeds.pairs.iter().map(|p| &p.1));
        let (from, to, from_table, to_table) = match direction {
            Direction::TargetToSource => (&t, &s, tgt, src),
            Direction::SourceToTarget => (&s, &t, src, tgt),
        };
        let mapped = apply_mapping(from_table, map)?;
        let flipped = SeedLexicon {
            pairs: match direction {
                Direction::TargetToSource => seeds.pairs.clone(),
                Direction::SourceToTarget => seeds
                    .pairs
                    .iter()
                    .map(|(a, b)| (b.clone(), a.clone()))
                    .collect(),
            },
        };
        Ok(AlignmentReport {
            direction,
            dim: map.dim(),
            seeds: seeds.len(),
            orthogonality_error: orthogonality_error(&map.matrix),
            seed_loss_before: from.sub(to).frobenius_norm(),
            seed_loss_after: procrustes_loss(from, to, &map.matrix),
            seed_precision_at_1: seed_precision(&mapped, to_table, &flipped, exec),
        })
    }
}
