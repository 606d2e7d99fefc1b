use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::surface::SurfaceSlice;

pub(crate) const INACTIVE: u32 = u32::MAX;

/// Structured pixel mesh: one Q4 element per material pixel, nodes on the
/// pixel corners. Node `(a, b)` sits at axial index `a` (0..=rows) and radial
/// index `b` (0..=cols). Only nodes touching a material element carry DOFs,
/// numbered row-major; node `k` owns DOFs `2k` (radial) and `2k + 1` (axial).
#[derive(Debug, Clone)]
pub struct PixelMesh {
    pub rows: usize,
    pub cols: usize,
    pub(crate) node_index: Vec<u32>,
    /// `(a, b)` of every active node in DOF order.
    pub(crate) nodes: Vec<(usize, usize)>,
    pub(crate) material: Vec<bool>,
}

impl PixelMesh {
    pub fn new(slice: &SurfaceSlice) -> Self {
        let (rows, cols) = (slice.rows(), slice.cols());
        let mut node_index = vec![INACTIVE; (rows + 1) * (cols + 1)];
        let mut touched = vec![false; (rows + 1) * (cols + 1)];
        for i in 0..rows {
            for j in 0..cols {
                if slice.is_material(i, j) {
                    for (a, b) in element_nodes(i, j) {
                        touched[a * (cols + 1) + b] = true;
                    }
                }
            }
        }
        let mut nodes = Vec::new();
        for (k, t) in touched.iter().enumerate() {
            if *t {
                node_index[k] = nodes.len() as u32;
                nodes.push((k / (cols + 1), k % (cols + 1)));
            }
        }
        Self {
            rows,
            cols,
            node_index,
            nodes,
            material: slice.mask().to_vec(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Grid position `(a, b)` of every active node, in DOF order.
    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.material.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub(crate) fn node(&self, a: usize, b: usize) -> Option<usize> {
        match self.node_index[a * (self.cols + 1) + b] {
            INACTIVE => None,
            k => Some(k as usize),
        }
    }

    #[inline]
    pub(crate) fn is_material(&self, i: usize, j: usize) -> bool {
        self.material[i * self.cols + j]
    }

    /// Material elements around node `(a, b)` with the node's local index in each.
    pub(crate) fn adjacent_elements(&self, a: usize, b: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (element row offset, element col offset, local index of the node)
        const AROUND: [(isize, isize, usize); 4] = [(0, 0, 0), (0, -1, 1), (-1, -1, 2), (-1, 0, 3)];
        AROUND.iter().filter_map(move |&(di, dj, local)| {
            let i = a as isize + di;
            let j = b as isize + dj;
            if i < 0 || j < 0 || i as usize >= self.rows || j as usize >= self.cols {
                return None;
            }
            let (i, j) = (i as usize, j as usize);
            self.is_material(i, j).then_some((i, j, local))
        })
    }
}

/// Corner nodes of element `(i, j)` in local order
/// (ξ,η) = (-1,-1), (1,-1), (1,1), (-1,1); ξ runs radially, η axially.
#[inline]
pub(crate) fn element_nodes(i: usize, j: usize) -> [(usize, usize); 4] {
    [(i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j)]
}

/// Rejects slices whose material is not a single edge-connected body that
/// reaches both loaded edges. Corner-only contacts do not count: they are
/// hinges in the Q4 mesh.
pub fn check_connectivity(slice: &SurfaceSlice) -> Result<()> {
    slice.check_load_path()?;
    let (rows, cols) = (slice.rows(), slice.cols());
    let mut label = vec![u32::MAX; rows * cols];
    let mut n_components = 0u32;
    let mut touches = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..rows * cols {
        if !slice.mask()[start] || label[start] != u32::MAX {
            continue;
        }
        let id = n_components;
        n_components += 1;
        let (mut bottom, mut top) = (false, false);
        label[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (i, j) = (p / cols, p % cols);
            bottom |= i == 0;
            top |= i == rows - 1;
            let mut visit = |q: usize| {
                if slice.mask()[q] && label[q] == u32::MAX {
                    label[q] = id;
                    queue.push_back(q);
                }
            };
            if i > 0 {
                visit(p - cols);
            }
            if i + 1 < rows {
                visit(p + cols);
            }
            if j > 0 {
                visit(p - 1);
            }
            if j + 1 < cols {
                visit(p + 1);
            }
        }
        touches.push((bottom, top));
    }
    match n_components {
        0 => Err(Error::Geometry("slice has no material".into())),
        1 if touches[0] == (true, true) => Ok(()),
        1 => Err(Error::Geometry(
            "material does not span the axial extent".into(),
        )),
        n => Err(Error::Geometry(format!(
            "material splits into {n} disconnected pieces"
        ))),
    }
}
