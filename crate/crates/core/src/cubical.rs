//! Filtered cubical complexes over pixel grids, and their sublevel-set
//! persistent homology in dimensions 0 and 1.
//!
//! Each pixel is a unit square (a top cell); edges and vertices take the
//! minimum value over the squares they touch. That convention makes
//! diagonally adjacent dark pixels connected through their shared vertex, so
//! components merge the way dark structure visually does. Sublevel sets grow
//! as the threshold rises; dimension 0 tracks connected components (paired by
//! the elder rule via union-find) and dimension 1 tracks holes (paired by
//! column reduction of the square boundaries over Z/2).

use crate::binarize::DtImage;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// A rectangular grid of finite filtration values, one per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarGrid {
    /// Wraps row-major values. Dimensions must be positive, the buffer must
    /// match, and every value must be finite.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if values.len() != width * height {
            return Err(Error::PixelCountMismatch {
                width,
                height,
                expected: width * height,
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "filtration values must be finite, found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Grid of raw intensities, for sublevel-set filtrations of grayscale
    /// images.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            values: img.pixels().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Grid of capped integer distances, for distance-transform filtrations.
    pub fn from_capped_distances(dt: &DtImage) -> Self {
        Self {
            width: dt.width(),
            height: dt.height(),
            values: dt.capped().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn square_value(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.width + c]
    }
}

/// The cubical complex of a `w x h` grid: `(w+1)(h+1)` vertices, edges
/// between grid neighbors, and one square per pixel, each cell carrying a
/// filtration value.
///
/// Cells are enumerated vertices first, then horizontal edges, then vertical
/// edges, then squares, row-major within each block. Filtration ties between
/// cells are broken by that enumeration order, which also places every cell
/// after its faces.
#[derive(Debug, Clone)]
pub struct FilteredCubicalComplex {
    /// Squares per row (pixel width).
    width: usize,
    /// Squares per column (pixel height).
    height: usize,
    /// Filtration value per cell id.
    values: Vec<f64>,
}

impl FilteredCubicalComplex {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    fn n_vertices(&self) -> usize {
        (self.width + 1) * (self.height + 1)
    }

    fn n_hedges(&self) -> usize {
        (self.height + 1) * self.width
    }

    fn n_vedges(&self) -> usize {
        self.height * (self.width + 1)
    }

    fn vertex_id(&self, r: usize, c: usize) -> usize {
        r * (self.width + 1) + c
    }

    /// Horizontal edge from vertex (r, c) to (r, c+1).
    fn hedge_id(&self, r: usize, c: usize) -> usize {
        self.n_vertices() + r * self.width + c
    }

    /// Vertical edge from vertex (r, c) to (r+1, c).
    fn vedge_id(&self, r: usize, c: usize) -> usize {
        self.n_vertices() + self.n_hedges() + r * (self.width + 1) + c
    }

    fn square_id(&self, r: usize, c: usize) -> usize {
        self.n_vertices() + self.n_hedges() + self.n_vedges() + r * self.width + c
    }

    /// Dimension of a cell id.
    pub fn dim(&self, cell: usize) -> usize {
        if cell < self.n_vertices() {
            0
        } else if cell < self.n_vertices() + self.n_hedges() + self.n_vedges() {
            1
        } else {
            2
        }
    }

    /// Endpoint vertex ids of an edge.
    fn edge_vertices(&self, edge: usize) -> [usize; 2] {
        debug_assert_eq!(self.dim(edge), 1);
        let he0 = self.n_vertices();
        let ve0 = he0 + self.n_hedges();
        if edge < ve0 {
            let (r, c) = ((edge - he0) / self.width, (edge - he0) % self.width);
            [self.vertex_id(r, c), self.vertex_id(r, c + 1)]
        } else {
            let (r, c) = ((edge - ve0) / (self.width + 1), (edge - ve0) % (self.width + 1));
            [self.vertex_id(r, c), self.vertex_id(r + 1, c)]
        }
    }

    /// The four boundary edges of the square at (r, c).
    fn square_edges(&self, r: usize, c: usize) -> [usize; 4] {
        [
            self.hedge_id(r, c),
            self.hedge_id(r + 1, c),
            self.vedge_id(r, c),
            self.vedge_id(r, c + 1),
        ]
    }

    /// Face ids of a cell: endpoints of an edge, boundary edges of a square,
    /// nothing for a vertex.
    pub fn faces(&self, cell: usize) -> Vec<usize> {
        match self.dim(cell) {
            0 => Vec::new(),
            1 => self.edge_vertices(cell).to_vec(),
            _ => {
                let sq0 = self.n_vertices() + self.n_hedges() + self.n_vedges();
                let (r, c) = ((cell - sq0) / self.width, (cell - sq0) % self.width);
                self.square_edges(r, c).to_vec()
            }
        }
    }
}

/// Builds the filtered complex of a grid: squares take the pixel value,
/// every lower cell the minimum over the squares containing it.
pub fn build_complex(grid: &ScalarGrid) -> FilteredCubicalComplex {
    let (w, h) = (grid.width(), grid.height());
    let mut cx = FilteredCubicalComplex {
        width: w,
        height: h,
        values: vec![0.0; (2 * w + 1) * (2 * h + 1)],
    };

    for r in 0..=h {
        for c in 0..=w {
            // Incident squares have row in {r-1, r} and column in {c-1, c},
            // clipped to the grid.
            let mut m = f64::INFINITY;
            for sr in r.saturating_sub(1)..=r.min(h - 1) {
                for sc in c.saturating_sub(1)..=c.min(w - 1) {
                    m = m.min(grid.square_value(sr, sc));
                }
            }
            let id = cx.vertex_id(r, c);
            cx.values[id] = m;
        }
    }
    for r in 0..=h {
        for c in 0..w {
            let mut m = f64::INFINITY;
            for sr in r.saturating_sub(1)..=r.min(h - 1) {
                m = m.min(grid.square_value(sr, c));
            }
            let id = cx.hedge_id(r, c);
            cx.values[id] = m;
        }
    }
    for r in 0..h {
        for c in 0..=w {
            let mut m = f64::INFINITY;
            for sc in c.saturating_sub(1)..=c.min(w - 1) {
                m = m.min(grid.square_value(r, sc));
            }
            let id = cx.vedge_id(r, c);
            cx.values[id] = m;
        }
    }
    for r in 0..h {
        for c in 0..w {
            let id = cx.square_id(r, c);
            cx.values[id] = grid.square_value(r, c);
        }
    }
    cx
}

/// A persistence diagram in one homological dimension: (birth, death) pairs
/// with `f64::INFINITY` marking essential classes, sorted by birth then
/// death.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    dimension: usize,
    pairs: Vec<(f64, f64)>,
}

impl PersistenceDiagram {
    pub fn new(dimension: usize, mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_unstable_by(|a, b| {
            a.0.total_cmp(&b.0).then_with(|| a.1.total_cmp(&b.1))
        });
        Self { dimension, pairs }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn essential_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.1.is_infinite()).count()
    }
}

/// Renders diagrams as text, one `dim birth death` line per pair with `inf`
/// for essential deaths.
pub fn render_diagrams(diagrams: &[&PersistenceDiagram]) -> String {
    let mut out = String::new();
    for dgm in diagrams {
        for &(b, d) in dgm.pairs() {
            if d.is_infinite() {
                out.push_str(&format!("{} {} inf\n", dgm.dimension(), b));
            } else {
                out.push_str(&format!("{} {} {}\n", dgm.dimension(), b, d));
            }
        }
    }
    out
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grandparent = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grandparent;
            x = grandparent;
        }
        x
    }

    /// Attaches the tree rooted at `child` under `root`.
    fn attach(&mut self, child: u32, root: u32) {
        self.parent[child as usize] = root;
    }
}

/// Computes the sublevel-set persistence diagrams of a filtered complex in
/// dimensions 0 and 1.
///
/// Zero-persistence pairs are dropped. The dimension-0 diagram contains
/// exactly one essential pair, born at the global minimum; a full rectangle
/// has no essential 1-cycles, so every dimension-1 pair is finite.
pub fn persistence(cx: &FilteredCubicalComplex) -> (PersistenceDiagram, PersistenceDiagram) {
    let n = cx.cell_count();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        cx.value(a as usize)
            .total_cmp(&cx.value(b as usize))
            .then(a.cmp(&b))
    });
    let mut rank = vec![0u32; n];
    for (pos, &cell) in order.iter().enumerate() {
        rank[cell as usize] = pos as u32;
    }

    let n_vertices = cx.n_vertices();
    let mut dset = DisjointSet::new(n_vertices);
    // Birth vertex of each component, tracked at the root; the elder birth
    // (smallest rank) wins every merge.
    let birth_vertex: Vec<u32> = (0..n_vertices as u32).collect();

    let mut pairs0 = Vec::new();
    let mut pairs1 = Vec::new();

    // Reduction state for dimension 1: for each edge rank, the stored
    // reduced column (if any) having that pivot.
    let mut owner: Vec<u32> = vec![u32::MAX; n];
    let mut columns: Vec<Vec<u32>> = Vec::new();

    for &cell in &order {
        let cell = cell as usize;
        match cx.dim(cell) {
            0 => {}
            1 => {
                let [a, b] = cx.edge_vertices(cell);
                let ra = dset.find(a as u32);
                let rb = dset.find(b as u32);
                if ra == rb {
                    // Positive edge: the cycle it opens is paired off by a
                    // square during reduction.
                    continue;
                }
                let (elder, younger) =
                    if rank[birth_vertex[ra as usize] as usize]
                        <= rank[birth_vertex[rb as usize] as usize]
                    {
                        (ra, rb)
                    } else {
                        (rb, ra)
                    };
                let birth = cx.value(birth_vertex[younger as usize] as usize);
                let death = cx.value(cell);
                if birth < death {
                    pairs0.push((birth, death));
                }
                dset.attach(younger, elder);
            }
            _ => {
                let sq0 = cx.n_vertices() + cx.n_hedges() + cx.n_vedges();
                let (r, c) = ((cell - sq0) / cx.width, (cell - sq0) % cx.width);
                let mut col: Vec<u32> = cx
                    .square_edges(r, c)
                    .iter()
                    .map(|&e| rank[e])
                    .collect();
                col.sort_unstable();
                while let Some(&pivot) = col.last() {
                    let j = owner[pivot as usize];
                    if j == u32::MAX {
                        break;
                    }
                    col = xor_sorted(&col, &columns[j as usize]);
                }
                // Every square of a full rectangle closes a cycle, so the
                // reduced column never vanishes.
                let pivot = *col.last().expect("square column reduced to zero");
                let birth = cx.value(order[pivot as usize] as usize);
                let death = cx.value(cell);
                if birth < death {
                    pairs1.push((birth, death));
                }
                owner[pivot as usize] = columns.len() as u32;
                columns.push(col);
            }
        }
    }

    // Essential components: one per surviving root.
    let mut roots: Vec<u32> = (0..n_vertices as u32).map(|v| dset.find(v)).collect();
    roots.sort_unstable();
    roots.dedup();
    for root in roots {
        pairs0.push((cx.value(birth_vertex[root as usize] as usize), f64::INFINITY));
    }

    (
        PersistenceDiagram::new(0, pairs0),
        PersistenceDiagram::new(1, pairs1),
    )
}

/// Symmetric difference of two ascending rank lists.
fn xor_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Betti numbers (components, holes) of the sublevel complex at threshold
/// `t`, computed directly: components by union-find over present vertices
/// and edges, holes from the Euler characteristic.
pub fn betti_at(cx: &FilteredCubicalComplex, t: f64) -> (usize, usize) {
    let n_vertices = cx.n_vertices();
    let present = |cell: usize| cx.value(cell) <= t;

    let mut dset = DisjointSet::new(n_vertices);
    let mut v_count = 0usize;
    for v in 0..n_vertices {
        if present(v) {
            v_count += 1;
        }
    }

    let mut e_count = 0usize;
    let edge_range = n_vertices..n_vertices + cx.n_hedges() + cx.n_vedges();
    for e in edge_range {
        if present(e) {
            e_count += 1;
            let [a, b] = cx.edge_vertices(e);
            let ra = dset.find(a as u32);
            let rb = dset.find(b as u32);
            if ra != rb {
                dset.attach(ra, rb);
            }
        }
    }

    let mut s_count = 0usize;
    let sq0 = n_vertices + cx.n_hedges() + cx.n_vedges();
    for s in sq0..cx.cell_count() {
        if present(s) {
            s_count += 1;
        }
    }

    let mut roots: Vec<u32> = (0..n_vertices)
        .filter(|&v| present(v))
        .map(|v| dset.find(v as u32))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    let b0 = roots.len();

    let euler = v_count as i64 - e_count as i64 + s_count as i64;
    let b1 = b0 as i64 - euler;
    debug_assert!(b1 >= 0, "negative first Betti number");
    (b0, b1.max(0) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, values: &[f64]) -> ScalarGrid {
        ScalarGrid::new(w, h, values.to_vec()).unwrap()
    }

    fn grid_u8(w: usize, h: usize, values: &[u8]) -> ScalarGrid {
        grid(w, h, &values.iter().map(|&v| f64::from(v)).collect::<Vec<_>>())
    }

    #[test]
    fn grid_rejects_non_finite_values() {
        assert!(ScalarGrid::new(2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(ScalarGrid::new(2, 1, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn complex_has_the_expected_cell_counts() {
        let cx = build_complex(&grid_u8(3, 2, &[0; 6]));
        assert_eq!(cx.n_vertices(), 12);
        assert_eq!(cx.n_hedges(), 9);
        assert_eq!(cx.n_vedges(), 8);
        assert_eq!(cx.cell_count(), 35);
    }

    #[test]
    fn single_pixel_complex_assigns_the_pixel_value_everywhere() {
        let cx = build_complex(&grid_u8(1, 1, &[7]));
        assert_eq!(cx.cell_count(), 9);
        for cell in 0..9 {
            assert_eq!(cx.value(cell), 7.0);
        }
    }

    #[test]
    fn lower_cells_take_the_minimum_over_incident_squares() {
        // 2x1 grid [3, 5]: the shared vertical edge and its vertices get 3.
        let cx = build_complex(&grid_u8(2, 1, &[3, 5]));
        let shared_edge = cx.vedge_id(0, 1);
        assert_eq!(cx.value(shared_edge), 3.0);
        assert_eq!(cx.value(cx.vertex_id(0, 1)), 3.0);
        assert_eq!(cx.value(cx.vertex_id(0, 2)), 5.0);
        assert_eq!(cx.value(cx.square_id(0, 1)), 5.0);
    }

    #[test]
    fn diagonal_pixels_are_connected_through_the_shared_vertex() {
        // [0 7; 7 0]: the two dark squares meet at the center vertex, so the
        // sublevel set at 0 is one component with no hole.
        let cx = build_complex(&grid_u8(2, 2, &[0, 7, 7, 0]));
        assert_eq!(betti_at(&cx, 0.0), (1, 0));
        let (d0, d1) = persistence(&cx);
        assert_eq!(d0.pairs(), &[(0.0, f64::INFINITY)]);
        assert!(d1.is_empty());
    }

    #[test]
    fn ring_image_has_one_hole_until_the_center_fills() {
        let ring = grid_u8(3, 3, &[0, 0, 0, 0, 5, 0, 0, 0, 0]);
        let cx = build_complex(&ring);
        assert_eq!(betti_at(&cx, 2.0), (1, 1));
        assert_eq!(betti_at(&cx, 5.0), (1, 0));
        let (d0, d1) = persistence(&cx);
        assert_eq!(d0.pairs(), &[(0.0, f64::INFINITY)]);
        assert_eq!(d1.pairs(), &[(0.0, 5.0)]);
    }

    #[test]
    fn double_ring_image_has_two_holes() {
        #[rustfmt::skip]
        let values = [
            0, 0, 0, 0, 0,
            0, 9, 0, 9, 0,
            0, 0, 0, 0, 0,
        ];
        let cx = build_complex(&grid_u8(5, 3, &values));
        assert_eq!(betti_at(&cx, 0.0), (1, 2));
        let (d0, d1) = persistence(&cx);
        assert_eq!(d0.pairs(), &[(0.0, f64::INFINITY)]);
        assert_eq!(d1.pairs(), &[(0.0, 9.0), (0.0, 9.0)]);
    }

    #[test]
    fn two_basins_merge_at_the_saddle() {
        // Pixel row [3, 0, 2, 0, 1]: two dark basins born at 0 connect once
        // the value-2 pixel arrives; the younger of the tied births dies.
        let cx = build_complex(&grid_u8(5, 1, &[3, 0, 2, 0, 1]));
        let (d0, d1) = persistence(&cx);
        assert_eq!(d0.pairs(), &[(0.0, 2.0), (0.0, f64::INFINITY)]);
        assert!(d1.is_empty());
        assert_eq!(betti_at(&cx, 0.0), (2, 0));
        assert_eq!(betti_at(&cx, 1.0), (2, 0));
        assert_eq!(betti_at(&cx, 2.0), (1, 0));
    }

    #[test]
    fn essential_class_is_born_at_the_global_minimum() {
        let cx = build_complex(&grid_u8(4, 3, &[9, 8, 7, 6, 5, 4, 3, 2, 9, 9, 9, 9]));
        let (d0, _) = persistence(&cx);
        assert_eq!(d0.essential_count(), 1);
        let essential = d0.pairs().iter().find(|p| p.1.is_infinite()).unwrap();
        assert_eq!(essential.0, 2.0);
    }

    #[test]
    fn finite_pairs_have_positive_persistence_and_canonical_order() {
        let values: Vec<u8> = (0..64).map(|i| (i * 37 % 11) as u8).collect();
        let cx = build_complex(&grid_u8(8, 8, &values));
        let (d0, d1) = persistence(&cx);
        for dgm in [&d0, &d1] {
            for &(b, d) in dgm.pairs() {
                assert!(b < d);
            }
            for pair in dgm.pairs().windows(2) {
                assert!(
                    pair[0].0 < pair[1].0
                        || (pair[0].0 == pair[1].0 && pair[0].1 <= pair[1].1)
                );
            }
        }
        assert_eq!(d1.essential_count(), 0);
    }

    #[test]
    fn rendered_diagram_lists_dimension_birth_death() {
        let ring = grid_u8(3, 3, &[0, 0, 0, 0, 5, 0, 0, 0, 0]);
        let (d0, d1) = persistence(&build_complex(&ring));
        assert_eq!(render_diagrams(&[&d0, &d1]), "0 0 inf\n1 0 5\n");
    }

    /// Counts diagram pairs alive at `t`, i.e. with birth <= t < death.
    fn alive_at(dgm: &PersistenceDiagram, t: f64) -> usize {
        dgm.pairs().iter().filter(|&&(b, d)| b <= t && t < d).count()
    }

    proptest! {
        #[test]
        fn faces_never_exceed_their_cofaces(
            w in 1usize..6,
            h in 1usize..6,
            values in proptest::collection::vec(0u8..16, 36),
        ) {
            let g = grid_u8(w, h, &values[..w * h]);
            let cx = build_complex(&g);
            for cell in 0..cx.cell_count() {
                for face in cx.faces(cell) {
                    prop_assert!(cx.value(face) <= cx.value(cell));
                }
            }
        }

        #[test]
        fn diagrams_count_betti_numbers_at_every_level(
            w in 1usize..7,
            h in 1usize..7,
            values in proptest::collection::vec(0u8..7, 49),
        ) {
            let g = grid_u8(w, h, &values[..w * h]);
            let cx = build_complex(&g);
            let (d0, d1) = persistence(&cx);
            for t in 0..7 {
                let (b0, b1) = betti_at(&cx, f64::from(t));
                prop_assert_eq!(alive_at(&d0, f64::from(t)), b0);
                prop_assert_eq!(alive_at(&d1, f64::from(t)), b1);
            }
        }

        #[test]
        fn deaths_in_dimension_zero_follow_births(
            values in proptest::collection::vec(0u8..10, 25),
        ) {
            let g = grid_u8(5, 5, &values);
            let (d0, d1) = persistence(&build_complex(&g));
            prop_assert_eq!(d0.essential_count(), 1);
            prop_assert_eq!(d1.essential_count(), 0);
            // Dimension-0 births are vertex values, deaths edge values; both
            // are pixel values under the min convention.
            for &(b, d) in d0.pairs() {
                prop_assert!(values.iter().any(|&v| f64::from(v) == b));
                prop_assert!(d.is_infinite() || values.iter().any(|&v| f64::from(v) == d));
            }
        }
    }
}
