//! Semantic kNN graph, its Laplacian and the Laplacian smoothness penalty.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::datamodel::{FeatureMatrix, Model, SemanticGraph};
use crate::descriptor::{find_neighbors, NeighborMetric};
use crate::error::{Error, Result};
use crate::ingest::write_atomic;

pub const DEFAULT_K_S: usize = 10;

/// Connects every descriptor row to its `k_s` nearest rows (euclidean, ties
/// to the lower id). The edge set is the symmetric union of the kNN lists and
/// each edge is weighted by the descriptors' inner product, clamped at 0.
pub fn build_semantic_graph(descriptors: ArrayView2<'_, f64>, k_s: usize) -> Result<SemanticGraph> {
    let n = descriptors.nrows();
    let knn = find_neighbors(descriptors, k_s, NeighborMetric::Euclidean)?;
    for (i, row) in descriptors.outer_iter().enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            log::warn!("descriptor of node {i} is all zeros; its edges carry zero weight");
        }
    }
    let mut edges = Vec::with_capacity(n * k_s);
    for i in 0..n {
        for j in knn.ids(i) {
            let w = descriptors.row(i).dot(&descriptors.row(j)).max(0.0);
            edges.push((i, j, w));
        }
    }
    // mutual kNN pairs appear twice; the dot product is symmetric so the
    // weights agree exactly
    SemanticGraph::from_edges(n, edges)
}

/// `L_s = D_s − W_s`.
pub fn laplacian(graph: &SemanticGraph) -> Array2<f64> {
    let mut l = -graph.weights();
    for (i, d) in graph.degree().iter().enumerate() {
        l[[i, i]] += d;
    }
    l
}

fn check_laplacian(l: ArrayView2<'_, f64>, n: usize) -> Result<()> {
    if l.dim() != (n, n) {
        return Err(Error::validation(format!(
            "Laplacian is {:?}, expected {n}x{n}",
            l.dim()
        )));
    }
    Ok(())
}

/// `tr(MᵀXᵀL_sXM)`.
pub fn smoothness(model: &Model, x: &FeatureMatrix, l: ArrayView2<'_, f64>) -> Result<f64> {
    check_laplacian(l, x.n())?;
    let p = model.predict(x)?;
    Ok((&p * &l.dot(&p)).sum())
}

/// Writes a graph as triplet text: header `n nnz`, then one `i j weight` line
/// per stored entry of the symmetric weight matrix (both orientations of
/// every edge, row-major).
pub fn write_graph(path: &Path, graph: &SemanticGraph) -> Result<()> {
    let mut entries: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .flat_map(|&(i, j)| [(i, j), (j, i)])
        .collect();
    entries.sort_unstable();
    let mut out = format!("{} {}\n", graph.n(), entries.len());
    for (i, j) in entries {
        out.push_str(&format!("{i} {j} {}\n", graph.weights()[[i, j]]));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_graph(path: &Path) -> Result<SemanticGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::ingest(path, 1, "empty graph file, expected header 'n nnz'"))?;
    let parse_usize = |line: usize, tok: &str| -> Result<usize> {
        tok.parse()
            .map_err(|_| Error::ingest(path, line, format!("cannot parse '{tok}' as an integer")))
    };
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(Error::ingest(path, hline, "header must be 'n nnz'"));
    }
    let n = parse_usize(hline, head[0])?;
    let nnz = parse_usize(hline, head[1])?;
    let mut entries = Vec::with_capacity(nnz);
    for (lineno, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::ingest(path, lineno, "expected 'i j weight'"));
        }
        let w: f64 = toks[2]
            .parse()
            .map_err(|_| Error::ingest(path, lineno, format!("bad weight '{}'", toks[2])))?;
        entries.push((
            parse_usize(lineno, toks[0])?,
            parse_usize(lineno, toks[1])?,
            w,
        ));
    }
    if entries.len() != nnz {
        return Err(Error::ingest(
            path,
            0,
            format!("header declares {nnz} entries, file has {}", entries.len()),
        ));
    }
    SemanticGraph::from_edges(n, entries).map_err(|e| Error::ingest(path, 0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_unit_descriptors() {
        let s = array![[1.0, 0.0], [1.0, 0.0]];
        let g = build_semantic_graph(s.view(), 1).unwrap();
        assert_eq!(g.weights()[[0, 1]], 1.0);
    }

    #[test]
    fn orthogonal_descriptors_get_zero_weight_edge() {
        let s = array![[1.0, 0.0], [0.0, 1.0]];
        let g = build_semantic_graph(s.view(), 1).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.weights()[[0, 1]], 0.0);
    }

    #[test]
    fn negative_products_clamped() {
        let s = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]];
        let g = build_semantic_graph(s.view(), 1).unwrap();
        assert!(g.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn k_s_too_large() {
        let s = array![[1.0], [2.0]];
        assert!(build_semantic_graph(s.view(), 2).is_err());
    }

    #[test]
    fn laplacian_examples() {
        let g = SemanticGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(laplacian(&g), array![[1.0, -1.0], [-1.0, 1.0]]);
        assert_eq!(
            laplacian(&SemanticGraph::empty(3)),
            Array2::<f64>::zeros((3, 3))
        );
        let path = SemanticGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(
            laplacian(&path),
            array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]]
        );
    }

    #[test]
    fn smoothness_examples() {
        let x = FeatureMatrix::new(array![[1.0, 2.0], [1.0, 2.0]]).unwrap();
        let l = array![[1.0, -1.0], [-1.0, 1.0]];
        assert_eq!(smoothness(&Model::zeros(2, 3), &x, l.view()).unwrap(), 0.0);
        let m = Model::new(array![[1.0, -2.0], [0.5, 3.0]]).unwrap();
        assert_eq!(smoothness(&m, &x, l.view()).unwrap(), 0.0);
        let bad = Array2::<f64>::zeros((3, 3));
        assert!(smoothness(&m, &x, bad.view()).is_err());
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> SemanticGraph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.3 {
                    edges.push((i, j, rng.random::<f64>() * 2.0));
                }
            }
        }
        SemanticGraph::from_edges(n, edges).unwrap()
    }

    #[test]
    fn laplacian_is_psd_with_zero_row_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.random_range(2..=30);
            let l = laplacian(&random_graph(&mut rng, n));
            let min = linalg::symmetric_eigenvalues(l.view())[0];
            assert!(min >= -1e-9, "min eigenvalue {min}");
            for row in l.outer_iter() {
                assert!(row.sum().abs() <= 1e-10);
            }
        }
    }

    /// `Σ_{i,j} w_ij ‖(x_i − x_j)M‖²` over ordered pairs, by explicit loops.
    fn pairwise_penalty(w: &Array2<f64>, x: &Array2<f64>, m: &Array2<f64>) -> f64 {
        let n = x.nrows();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let diff = &x.row(i) - &x.row(j);
                let proj = diff.dot(m);
                total += w[[i, j]] * proj.iter().map(|v| v * v).sum::<f64>();
            }
        }
        total
    }

    #[test]
    fn smoothness_matches_half_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((6, 3), |_| rng.random::<f64>() - 0.5);
        let m = Array2::from_shape_fn((3, 2), |_| rng.random::<f64>() - 0.5);
        let g = random_graph(&mut rng, 6);
        let fm = FeatureMatrix::new(x.clone()).unwrap();
        let value = smoothness(&Model::new(m.clone()).unwrap(), &fm, laplacian(&g).view()).unwrap();
        let oracle = 0.5 * pairwise_penalty(g.weights(), &x, &m);
        assert!((value - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
    }

    #[test]
    fn graph_file_round_trip() {
        let g =
            SemanticGraph::from_edges(4, [(0, 1, 0.25), (2, 3, 0.0), (1, 3, 1.0 / 3.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tri");
        write_graph(&path, &g).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("4 6\n"));
        assert_eq!(read_graph(&path).unwrap(), g);
    }

    /// Independent O(n²) construction: full distance sort per node.
    fn oracle_weights(s: &Array2<f64>, k: usize) -> Array2<f64> {
        let n = s.nrows();
        let mut w = Array2::zeros((n, n));
        for i in 0..n {
            let mut order: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = s
                        .row(i)
                        .iter()
                        .zip(s.row(j).iter())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    (d2, j)
                })
                .collect();
            order.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &(_, j) in order.iter().take(k) {
                let v = s.row(i).dot(&s.row(j)).max(0.0);
                w[[i, j]] = v;
                w[[j, i]] = v;
            }
        }
        w
    }

    #[test]
    fn construction_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = Array2::from_shape_fn((20, 5), |_| rng.random::<f64>());
        let g = build_semantic_graph(s.view(), 3).unwrap();
        assert_eq!(g.weights(), &oracle_weights(&s, 3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn built_graphs_are_symmetric_and_nonnegative(
            n in 3usize..20,
            k in 1usize..3,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = Array2::from_shape_fn((n, 4), |_| rng.random::<f64>() * 2.0 - 0.5);
            let g = build_semantic_graph(s.view(), k).unwrap();
            let w = g.weights();
            for i in 0..n {
                prop_assert_eq!(w[[i, i]], 0.0);
                for j in 0..n {
                    prop_assert_eq!(w[[i, j]], w[[j, i]]);
                    prop_assert!(w[[i, j]] >= 0.0);
                }
            }
        }

        #[test]
        fn smoothness_is_nonnegative_and_quadratic(
            seed in any::<u64>(),
            alpha in -5.0..5.0f64,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=20);
            let x = FeatureMatrix::new(Array2::from_shape_fn((n, 4), |_| rng.random::<f64>() - 0.5)).unwrap();
            let m = Array2::from_shape_fn((4, 3), |_| rng.random::<f64>() - 0.5);
            let l = laplacian(&random_graph(&mut rng, n));
            let base = smoothness(&Model::new(m.clone()).unwrap(), &x, l.view()).unwrap();
            prop_assert!(base >= -1e-10);
            let scaled = smoothness(&Model::new(&m * alpha).unwrap(), &x, l.view()).unwrap();
            let expected = alpha * alpha * base;
            prop_assert!((scaled - expected).abs() <= 1e-10 * expected.abs().max(1e-300) + 1e-15);
        }
    }
}
