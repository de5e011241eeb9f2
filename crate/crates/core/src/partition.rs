//! Hierarchical binary partition of the unit box `[0,1]^d`.
//!
//! Node `(h, i)` has children `(h+1, 2i-1)` and `(h+1, 2i)`. Going from depth
//! `h` to `h+1` bisects dimension `h mod d`, so the partition is fixed and
//! identical for every participant.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Deepest level addressable with a 64-bit index.
pub const MAX_SUPPORTED_DEPTH: u32 = 62;

/// Coordinate of a cell in the partition tree: depth `h` and 1-based index `i`.
///
/// Ordering is by `(depth, index)`, which is also the canonical pull order
/// and the tie-break order used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub depth: u32,
    pub index: u64,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { depth: 0, index: 1 };

    pub const fn new(depth: u32, index: u64) -> Self {
        NodeId { depth, index }
    }

    pub fn is_valid(self) -> bool {
        self.depth <= MAX_SUPPORTED_DEPTH && self.index >= 1 && self.index <= 1u64 << self.depth
    }

    /// `None` for the root.
    pub fn parent(self) -> Option<NodeId> {
        if self.depth == 0 {
            None
        } else {
            Some(NodeId::new(self.depth - 1, self.index.div_ceil(2)))
        }
    }

    /// Children without any depth limit check.
    pub fn children_unchecked(self) -> (NodeId, NodeId) {
        let d = self.depth + 1;
        (NodeId::new(d, 2 * self.index - 1), NodeId::new(d, 2 * self.index))
    }

    pub fn is_ancestor_of(self, other: NodeId) -> bool {
        if other.depth < self.depth {
            return false;
        }
        let shift = other.depth - self.depth;
        (other.index - 1) >> shift == self.index - 1
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.depth, self.index)
    }
}

/// Axis-aligned closed box inside `[0,1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell<T> {
    bounds: Vec<(T, T)>,
}

impl<T: Real> Cell<T> {
    pub fn unit(dim: usize) -> Self {
        Cell { bounds: vec![(T::zero(), T::one()); dim] }
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn width(&self, k: usize) -> T {
        let (lo, hi) = self.bounds[k];
        hi - lo
    }

    pub fn volume(&self) -> T {
        (0..self.dim()).map(|k| self.width(k)).fold(T::one(), |a, w| a * w)
    }

    /// Sup-norm diameter, i.e. the widest side.
    pub fn diameter(&self) -> T {
        (0..self.dim()).map(|k| self.width(k)).fold(T::zero(), T::max)
    }

    pub fn midpoint(&self) -> Vec<T> {
        let two = T::of(2.0);
        self.bounds.iter().map(|&(lo, hi)| (lo + hi) / two).collect()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim() && self.bounds.iter().zip(x).all(|(&(lo, hi), &v)| lo <= v && v <= hi)
    }

    /// True when the open interiors do not intersect.
    pub fn interior_disjoint(&self, other: &Cell<T>) -> bool {
        self.bounds
            .iter()
            .zip(&other.bounds)
            .any(|(&(a_lo, a_hi), &(b_lo, b_hi))| a_hi <= b_lo || b_hi <= a_lo)
    }
}

/// The shared partition together with the smoothness constants it realises.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    dim: usize,
    nu1: T,
    rho: T,
    max_depth: u32,
}

impl<T: Real> Partition<T> {
    /// Cyclic bisection of `[0,1]^dim` with the tightest constants for that
    /// rule: `(1, 1/2)` in one dimension, `(2, 2^(-1/d))` otherwise.
    pub fn new(dim: usize) -> Result<Self> {
        let (nu1, rho) = default_constants::<T>(dim)?;
        Self::with_constants(dim, nu1, rho)
    }

    pub fn with_constants(dim: usize, nu1: T, rho: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        if !(nu1 > T::zero()) || !nu1.is_finite() {
            return Err(Error::InvalidConfig(format!("nu1 must be positive, got {nu1}")));
        }
        if !(rho > T::zero() && rho < T::one()) {
            return Err(Error::InvalidConfig(format!("rho must lie in (0,1), got {rho}")));
        }
        Ok(Partition { dim, nu1, rho, max_depth: MAX_SUPPORTED_DEPTH })
    }

    pub fn with_max_depth(mut self, max_depth: u32) -> Self {
        self.max_depth = max_depth.min(MAX_SUPPORTED_DEPTH);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nu1(&self) -> T {
        self.nu1
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    /// Dimension (0-based) bisected when going from `depth` to `depth + 1`.
    pub fn split_dimension(&self, depth: u32) -> usize {
        depth as usize % self.dim
    }

    pub fn check(&self, node: NodeId) -> Result<()> {
        if !node.is_valid() {
            return Err(Error::InvalidNode { node });
        }
        if node.depth > self.max_depth {
            return Err(Error::DepthOverflow { depth: node.depth, max: self.max_depth });
        }
        Ok(())
    }

    pub fn children(&self, node: NodeId) -> Result<(NodeId, NodeId)> {
        self.check(node)?;
        if node.depth >= self.max_depth {
            return Err(Error::DepthOverflow { depth: node.depth + 1, max: self.max_depth });
        }
        Ok(node.children_unchecked())
    }

    pub fn cell(&self, node: NodeId) -> Result<Cell<T>> {
        self.check(node)?;
        let h = node.depth;
        let path = node.index - 1;
        // bits[j] accumulates the left/right choices applied to dimension j.
        let mut bits = vec![0u64; self.dim];
        let mut splits = vec![0i32; self.dim];
        for step in 0..h {
            let j = self.split_dimension(step);
            let bit = (path >> (h - 1 - step)) & 1;
            bits[j] = (bits[j] << 1) | bit;
            splits[j] += 1;
        }
        let two = T::of(2.0);
        let bounds = bits
            .iter()
            .zip(&splits)
            .map(|(&b, &n)| {
                let w = two.powi(-n);
                let lo = T::from_u64(b).expect("index fits") * w;
                (lo, lo + w)
            })
            .collect();
        Ok(Cell { bounds })
    }

    pub fn midpoint(&self, node: NodeId) -> Result<Vec<T>> {
        Ok(self.cell(node)?.midpoint())
    }

    /// `nu1 * rho^h`, the diameter bound every depth-`h` cell must satisfy.
    pub fn diameter_bound(&self, depth: u32) -> T {
        self.nu1 * self.rho.powi(depth as i32)
    }

    /// Node at `depth` whose cell contains `x`. Boundary points go to the
    /// upper neighbour except at 1, which belongs to the last cell.
    pub fn locate(&self, x: &[T], depth: u32) -> Result<NodeId> {
        if x.len() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "point has {} coordinates, partition has {}",
                x.len(),
                self.dim
            )));
        }
        if depth > self.max_depth {
            return Err(Error::DepthOverflow { depth, max: self.max_depth });
        }
        let mut node = NodeId::ROOT;
        let mut lo = vec![T::zero(); self.dim];
        let mut hi = vec![T::one(); self.dim];
        let two = T::of(2.0);
        for step in 0..depth {
            let j = self.split_dimension(step);
            let mid = (lo[j] + hi[j]) / two;
            let (left, right) = node.children_unchecked();
            if x[j] < mid {
                hi[j] = mid;
                node = left;
            } else {
                lo[j] = mid;
                node = right;
            }
        }
        Ok(node)
    }
}

/// Tightest `(nu1, rho)` for cyclic bisection in `dim` dimensions.
pub fn default_constants<T: Real>(dim: usize) -> Result<(T, T)> {
    match dim {
        0 => Err(Error::InvalidConfig("dimension must be positive".into())),
        1 => Ok((T::one(), T::of(0.5))),
        d => Ok((T::of(2.0), T::of(2.0).powf(-T::one() / T::of_usize(d)))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p1() -> Partition<f64> {
        Partition::new(1).unwrap()
    }

    #[test]
    fn root_covers_domain() {
        let p = p1();
        assert_eq!(p.root(), NodeId::new(0, 1));
        assert_eq!(p.cell(p.root()).unwrap().bounds(), &[(0.0, 1.0)]);
        let p3 = Partition::<f64>::new(3).unwrap();
        assert_eq!(p3.cell(p3.root()).unwrap(), Cell::unit(3));
        assert_eq!(p.children(p.root()).unwrap(), (NodeId::new(1, 1), NodeId::new(1, 2)));
    }

    #[test]
    fn children_index_arithmetic() {
        let p = p1();
        assert_eq!(p.children(NodeId::new(1, 2)).unwrap(), (NodeId::new(2, 3), NodeId::new(2, 4)));
        assert_eq!(p.children(NodeId::new(3, 5)).unwrap(), (NodeId::new(4, 9), NodeId::new(4, 10)));
        assert_eq!(p.cell(NodeId::new(1, 1)).unwrap().bounds(), &[(0.0, 0.5)]);
    }

    #[test]
    fn children_past_max_depth_overflow() {
        let p = p1().with_max_depth(3);
        assert!(p.children(NodeId::new(2, 1)).is_ok());
        assert!(matches!(p.children(NodeId::new(3, 1)), Err(Error::DepthOverflow { depth: 4, max: 3 })));
        assert!(matches!(p.cell(NodeId::new(4, 1)), Err(Error::DepthOverflow { .. })));
    }

    #[test]
    fn invalid_nodes_rejected() {
        let p = p1();
        assert!(matches!(p.cell(NodeId::new(2, 0)), Err(Error::InvalidNode { .. })));
        assert!(matches!(p.cell(NodeId::new(2, 5)), Err(Error::InvalidNode { .. })));
        assert!(matches!(p.cell(NodeId::new(0, 2)), Err(Error::InvalidNode { .. })));
    }

    #[test]
    fn cells_in_one_and_two_dimensions() {
        let p = p1();
        assert_eq!(p.cell(NodeId::new(2, 3)).unwrap().bounds(), &[(0.5, 0.75)]);
        let p2 = Partition::<f64>::new(2).unwrap();
        assert_eq!(p2.cell(NodeId::new(1, 1)).unwrap().bounds(), &[(0.0, 0.5), (0.0, 1.0)]);
        assert_eq!(p2.cell(NodeId::new(2, 1)).unwrap().bounds(), &[(0.0, 0.5), (0.0, 0.5)]);
        assert_eq!(p2.cell(NodeId::new(2, 4)).unwrap().bounds(), &[(0.5, 1.0), (0.5, 1.0)]);
    }

    #[test]
    fn midpoints() {
        let p = p1();
        assert_eq!(p.midpoint(NodeId::new(1, 2)).unwrap(), vec![0.75]);
        assert_eq!(p.midpoint(NodeId::new(0, 1)).unwrap(), vec![0.5]);
        let p2 = Partition::<f64>::new(2).unwrap();
        assert_eq!(p2.midpoint(NodeId::new(1, 1)).unwrap(), vec![0.25, 0.5]);
        let pf = Partition::<f32>::new(1).unwrap();
        assert_eq!(pf.midpoint(NodeId::new(2, 3)).unwrap(), vec![0.625f32]);
    }

    #[test]
    fn diameter_decay_one_dimension_is_tight() {
        let p = p1();
        for h in 0..=30u32 {
            for i in [1u64, (1u64 << h).div_ceil(2), 1u64 << h] {
                let d = p.cell(NodeId::new(h, i)).unwrap().diameter();
                assert_eq!(d, 0.5f64.powi(h as i32));
                assert!(d <= p.diameter_bound(h));
            }
        }
    }

    #[test]
    fn diameter_decay_cyclic_split() {
        for dim in 2..=4usize {
            let p = Partition::<f64>::new(dim).unwrap();
            assert_eq!(p.nu1(), 2.0);
            for h in 0..=24u32 {
                let n = NodeId::new(h, 1);
                let d = p.cell(n).unwrap().diameter();
                assert_eq!(d, 0.5f64.powi((h as usize / dim) as i32));
                assert!(d <= p.diameter_bound(h) * (1.0 + 1e-12), "dim {dim} h {h}");
            }
        }
    }

    #[test]
    fn depth_tiles_unit_box() {
        for dim in 1..=3usize {
            let p = Partition::<f64>::new(dim).unwrap();
            for h in 0..=8u32 {
                let cells: Vec<_> = (1..=1u64 << h).map(|i| p.cell(NodeId::new(h, i)).unwrap()).collect();
                let vol: f64 = cells.iter().map(Cell::volume).sum();
                assert!((vol - 1.0).abs() < 1e-12);
                for a in 0..cells.len() {
                    for b in (a + 1)..cells.len().min(a + 9) {
                        assert!(cells[a].interior_disjoint(&cells[b]));
                    }
                }
            }
        }
    }

    #[test]
    fn locate_finds_containing_cell() {
        let p = p1();
        assert_eq!(p.locate(&[0.52], 3).unwrap(), NodeId::new(3, 5));
        assert_eq!(p.locate(&[1.0], 4).unwrap(), NodeId::new(4, 16));
        assert_eq!(p.locate(&[0.0], 4).unwrap(), NodeId::new(4, 1));
    }

    #[test]
    fn invalid_constants_rejected() {
        assert!(Partition::<f64>::with_constants(1, 1.0, 1.0).is_err());
        assert!(Partition::<f64>::with_constants(1, 0.0, 0.5).is_err());
        assert!(Partition::<f64>::with_constants(0, 1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn parent_of_children_round_trips(h in 0u32..40, seed in any::<u64>()) {
            let n = NodeId::new(h, 1 + seed % (1u64 << h));
            let p = p1();
            let (l, r) = p.children(n).unwrap();
            prop_assert_eq!(l.parent(), Some(n));
            prop_assert_eq!(r.parent(), Some(n));
            prop_assert!(n.is_ancestor_of(l) && n.is_ancestor_of(r));
        }

        #[test]
        fn children_split_parent_cell(dim in 1usize..4, h in 0u32..20, seed in any::<u64>()) {
            let p = Partition::<f64>::new(dim).unwrap();
            let n = NodeId::new(h, 1 + seed % (1u64 << h));
            let parent = p.cell(n).unwrap();
            let (l, r) = p.children(n).unwrap();
            let (lc, rc) = (p.cell(l).unwrap(), p.cell(r).unwrap());
            prop_assert!(lc.interior_disjoint(&rc));
            prop_assert!((lc.volume() + rc.volume() - parent.volume()).abs() <= 1e-15);
            for k in 0..dim {
                let lo = lc.bounds()[k].0.min(rc.bounds()[k].0);
                let hi = lc.bounds()[k].1.max(rc.bounds()[k].1);
                prop_assert_eq!((lo, hi), parent.bounds()[k]);
            }
            prop_assert!(parent.contains(&p.midpoint(n).unwrap()));
        }

        #[test]
        fn locate_agrees_with_cell(dim in 1usize..4, h in 0u32..20, x in proptest::collection::vec(0.0f64..1.0, 3)) {
            let p = Partition::<f64>::new(dim).unwrap();
            let x = &x[..dim];
            let n = p.locate(x, h).unwrap();
            prop_assert!(p.cell(n).unwrap().contains(x));
        }
    }
}
