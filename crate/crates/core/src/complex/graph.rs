use serde::{Deserialize, Serialize};

use ligbind_tensor::Tensor;

use super::features::{featurize_ligand_atom, featurize_protein_atom, LIGAND_FEATURE_DIM, PROTEIN_FEATURE_DIM};
use super::{distance, Complex, Element, Vec3};
use crate::error::{Error, Result};

/// Partition pair of a directed edge, named `<source><destination>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    PP,
    LL,
    PL,
    LP,
}

impl EdgeKind {
    pub fn from_partitions(src_is_ligand: bool, dst_is_ligand: bool) -> Self {
        match (src_is_ligand, dst_is_ligand) {
            (false, false) => EdgeKind::PP,
            (true, true) => EdgeKind::LL,
            (false, true) => EdgeKind::PL,
            (true, false) => EdgeKind::LP,
        }
    }

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self as usize] = 1.0;
        v
    }

    pub fn is_cross(self) -> bool {
        matches!(self, EdgeKind::PL | EdgeKind::LP)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    pub distance: f64,
}

/// Residue identity of a protein atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResidueKey {
    pub residue_index: i64,
    pub chain_id: char,
    pub residue_name: String,
}

/// Featurized complex with a directed kNN edge list.
///
/// Node indices run over protein atoms first (`0..n_protein`), then ligand
/// atoms. Edges are grouped by destination node in ascending order and, within
/// a group, ordered from nearest to farthest source.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGraph {
    pub id: String,
    pub protein_features: Tensor,
    pub ligand_features: Tensor,
    pub positions: Vec<Vec3>,
    pub edges: Vec<Edge>,
    pub k: usize,
    pub protein_elements: Vec<Element>,
    pub ligand_elements: Vec<Element>,
    pub protein_residues: Vec<ResidueKey>,
}

impl ComplexGraph {
    pub fn n_protein(&self) -> usize {
        self.protein_elements.len()
    }

    pub fn n_ligand(&self) -> usize {
        self.ligand_elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn is_ligand(&self, node: usize) -> bool {
        node >= self.n_protein()
    }

    pub fn ligand_position(&self, i: usize) -> &Vec3 {
        &self.positions[self.n_protein() + i]
    }

    pub fn protein_position(&self, j: usize) -> &Vec3 {
        &self.positions[j]
    }
}

/// Builds the directed kNN graph: every node receives edges from its `k`
/// nearest other nodes (all of them if fewer exist). Equal distances are
/// resolved toward the lower node index.
pub fn build_knn_graph(c: &Complex, k: usize) -> Result<ComplexGraph> {
    if k == 0 {
        return Err(Error::Config("kNN degree k must be at least 1".into()));
    }
    let positions = c.positions();
    let n = positions.len();
    let n_protein = c.n_protein();
    let kk = k.min(n - 1);
    let mut edges = Vec::with_capacity(n * kk);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for dst in 0..n {
        cand.clear();
        cand.extend(
            (0..n)
                .filter(|&j| j != dst)
                .map(|j| (distance(&positions[j], &positions[dst]), j)),
        );
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, src) in cand.iter().take(kk) {
            edges.push(Edge {
                src,
                dst,
                kind: EdgeKind::from_partitions(src >= n_protein, dst >= n_protein),
                distance: d,
            });
        }
    }

    assemble(c, positions, edges, k)
}

/// Every ordered pair of distinct nodes, grouped by destination with sources
/// in index order. The edge order does not depend on coordinates.
pub fn build_complete_graph(c: &Complex) -> Result<ComplexGraph> {
    let positions = c.positions();
    let n = positions.len();
    let n_protein = c.n_protein();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1));
    for dst in 0..n {
        for src in (0..n).filter(|&s| s != dst) {
            edges.push(Edge {
                src,
                dst,
                kind: EdgeKind::from_partitions(src >= n_protein, dst >= n_protein),
                distance: distance(&positions[src], &positions[dst]),
            });
        }
    }
    assemble(c, positions, edges, n.saturating_sub(1))
}

fn assemble(c: &Complex, positions: Vec<Vec3>, edges: Vec<Edge>, k: usize) -> Result<ComplexGraph> {
    let n_protein = c.n_protein();
    let protein_features = Tensor::new(
        vec![n_protein, PROTEIN_FEATURE_DIM],
        c.protein.iter().flat_map(featurize_protein_atom).collect(),
    )?;
    let ligand_features = Tensor::new(
        vec![c.n_ligand(), LIGAND_FEATURE_DIM],
        c.ligand.iter().flat_map(featurize_ligand_atom).collect(),
    )?;
    Ok(ComplexGraph {
        id: c.id.clone(),
        protein_features,
        ligand_features,
        positions,
        edges,
        k,
        protein_elements: c.protein.iter().map(|a| a.element.clone()).collect(),
        ligand_elements: c.ligand.iter().map(|a| a.element.clone()).collect(),
        protein_residues: c
            .protein
            .iter()
            .map(|a| ResidueKey {
                residue_index: a.residue_index,
                chain_id: a.chain_id,
                residue_name: a.residue_name.clone(),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{Element, Hybridization, LigandAtom, ProteinAtom};

    pub(crate) fn toy(protein: &[Vec3], ligand: &[Vec3]) -> Complex {
        Complex {
            id: "toy".into(),
            affinity: None,
            protein: protein
                .iter()
                .enumerate()
                .map(|(i, &p)| ProteinAtom {
                    element: Element::new("C").unwrap(),
                    residue_name: "ALA".into(),
                    residue_index: i as i64,
                    chain_id: 'A',
                    is_backbone: false,
                    position: p,
                })
                .collect(),
            ligand: ligand
                .iter()
                .map(|&p| LigandAtom {
                    element: Element::new("O").unwrap(),
                    hybridization: Hybridization::Sp3,
                    formal_charge: 0,
                    degree: 1,
                    is_aromatic: false,
                    position: p,
                })
                .collect(),
        }
    }

    fn neighbors(g: &ComplexGraph, dst: usize) -> Vec<usize> {
        g.edges.iter().filter(|e| e.dst == dst).map(|e| e.src).collect()
    }

    #[test]
    fn collinear_k1() {
        // protein atoms at x=1 (node 0) and x=3 (node 1), ligand atom at x=0 (node 2)
        let c = toy(&[[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]], &[[0.0, 0.0, 0.0]]);
        let g = build_knn_graph(&c, 1).unwrap();
        assert_eq!(neighbors(&g, 2), vec![0]);
        assert_eq!(neighbors(&g, 1), vec![0]);
        assert_eq!(neighbors(&g, 0), vec![2]);
        assert_eq!(g.edges.iter().find(|e| e.dst == 2).unwrap().kind, EdgeKind::PL);
        assert_eq!(g.edges.iter().find(|e| e.dst == 0).unwrap().kind, EdgeKind::LP);
    }

    #[test]
    fn saturates_to_complete_graph() {
        let c = toy(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], &[[0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]);
        let g = build_knn_graph(&c, 10).unwrap();
        assert_eq!(g.edges.len(), 12);
        for dst in 0..4 {
            let mut nb = neighbors(&g, dst);
            nb.sort();
            let expected: Vec<usize> = (0..4).filter(|&j| j != dst).collect();
            assert_eq!(nb, expected);
        }
    }

    #[test]
    fn complete_graph_matches_saturated_knn_as_a_set() {
        let c = toy(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], &[[0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]);
        let full = build_complete_graph(&c).unwrap();
        let knn = build_knn_graph(&c, 100).unwrap();
        let key = |g: &ComplexGraph| {
            let mut v: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.dst, e.src)).collect();
            v.sort();
            v
        };
        assert_eq!(key(&full), key(&knn));
        assert_eq!(neighbors(&full, 2), vec![0, 1, 3]);
    }

    #[test]
    fn zero_k_rejected() {
        let c = toy(&[[0.0; 3]], &[[1.0, 0.0, 0.0]]);
        assert!(matches!(build_knn_graph(&c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn edge_kinds_follow_partitions() {
        let c = toy(&[[0.0; 3], [1.5, 0.0, 0.0]], &[[0.0, 1.2, 0.0], [0.0, 0.0, 1.7]]);
        let g = build_knn_graph(&c, 3).unwrap();
        for e in &g.edges {
            let expected = EdgeKind::from_partitions(g.is_ligand(e.src), g.is_ligand(e.dst));
            assert_eq!(e.kind, expected);
            assert_eq!(e.kind.one_hot().iter().sum::<f64>(), 1.0);
            assert_ne!(e.src, e.dst);
        }
    }
}
