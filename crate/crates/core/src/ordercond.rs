//! Order conditions for partitioned pairs over bi-coloured trees.
//!
//! Only trees whose black vertices all have black parents contribute to the
//! expansion of the conservative output `y₁` (the predictor component never
//! depends on `y`), so order `p` is certified by checking `φ(τ) = 1/τ!` on
//! that restricted family up to `p` vertices.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use crate::linalg::DenseMatrix;
use crate::tableau::PartitionedTableau;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Colour {
    Black,
    White,
}

/// Rooted tree with coloured vertices. Children are kept in canonical order,
/// so structural equality is equality up to reordering of subtrees.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BiColouredTree {
    colour: Colour,
    children: Vec<BiColouredTree>,
    order: usize,
}

impl BiColouredTree {
    pub fn leaf(colour: Colour) -> Self {
        Self {
            colour,
            children: Vec::new(),
            order: 1,
        }
    }

    pub fn new(colour: Colour, mut children: Vec<BiColouredTree>) -> Self {
        children.sort();
        let order = 1 + children.iter().map(|c| c.order).sum::<usize>();
        Self {
            colour,
            children,
            order,
        }
    }

    pub fn colour(&self) -> Colour {
        self.colour
    }

    pub fn children(&self) -> &[BiColouredTree] {
        &self.children
    }

    /// Number of vertices.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Black root and no black vertex below a white one.
    pub fn in_restricted_family(&self) -> bool {
        fn ok(t: &BiColouredTree) -> bool {
            t.children
                .iter()
                .all(|ch| (t.colour == Colour::Black || ch.colour == Colour::White) && ok(ch))
        }
        self.colour == Colour::Black && ok(self)
    }

    /// Canonical string form, e.g. `b[b,w[w]]`.
    pub fn serialise(&self) -> String {
        let mut s = String::new();
        self.write_into(&mut s);
        s
    }

    fn write_into(&self, out: &mut String) {
        out.push(match self.colour {
            Colour::Black => 'b',
            Colour::White => 'w',
        });
        if !self.children.is_empty() {
            out.push('[');
            for (k, ch) in self.children.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                ch.write_into(out);
            }
            out.push(']');
        }
    }
}

impl Ord for BiColouredTree {
    fn cmp(&self, other: &Self) -> Ordering {
        self.serialise().cmp(&other.serialise())
    }
}

impl PartialOrd for BiColouredTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BiColouredTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialise())
    }
}

fn allowed_child_colours(parent: Colour) -> &'static [Colour] {
    match parent {
        Colour::Black => &[Colour::Black, Colour::White],
        Colour::White => &[Colour::White],
    }
}

/// All restricted trees with exactly `n` vertices and the given root colour.
fn trees_with_root(n: usize, root: Colour) -> Vec<BiColouredTree> {
    if n == 1 {
        return vec![BiColouredTree::leaf(root)];
    }
    let mut out = BTreeSet::new();
    for forest in forests(n - 1, root) {
        out.insert(BiColouredTree::new(root, forest));
    }
    out.into_iter().collect()
}

/// Multisets of subtrees (as sorted vectors) whose orders sum to `m`,
/// each subtree's root colour admissible below `parent`.
fn forests(m: usize, parent: Colour) -> Vec<Vec<BiColouredTree>> {
    // Candidate subtrees of every size, in canonical order.
    let mut pool: Vec<BiColouredTree> = Vec::new();
    for size in 1..=m {
        for &c in allowed_child_colours(parent) {
            pool.extend(trees_with_root(size, c));
        }
    }
    pool.sort();
    let mut out = Vec::new();
    let mut current = Vec::new();
    extend_forest(&pool, 0, m, &mut current, &mut out);
    out
}

fn extend_forest(
    pool: &[BiColouredTree],
    start: usize,
    remaining: usize,
    current: &mut Vec<BiColouredTree>,
    out: &mut Vec<Vec<BiColouredTree>>,
) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for idx in start..pool.len() {
        let t = &pool[idx];
        if t.order <= remaining {
            current.push(t.clone());
            // Non-decreasing indices enumerate each multiset once.
            extend_forest(pool, idx, remaining - t.order, current, out);
            current.pop();
        }
    }
}

/// Every restricted bi-coloured tree with at most `max_order` vertices,
/// sorted by order and then by canonical form.
pub fn enumerate_tpy(max_order: usize) -> Vec<BiColouredTree> {
    (1..=max_order)
        .flat_map(|n| trees_with_root(n, Colour::Black))
        .collect()
}

/// Tree density `τ!`: order times the densities of the subtrees.
pub fn density(tree: &BiColouredTree) -> u64 {
    tree.order as u64 * tree.children.iter().map(density).product::<u64>()
}

/// Coefficient view used by the weight recursion; lets tests pair a main
/// tableau with a non-explicit second tableau.
pub(crate) struct WeightCoefficients<'a> {
    pub a: &'a DenseMatrix,
    pub b: &'a [f64],
    pub c: &'a [f64],
    pub ahat: &'a DenseMatrix,
    pub chat: &'a [f64],
}

impl<'a> WeightCoefficients<'a> {
    fn from_pair(p: &'a PartitionedTableau) -> Self {
        Self {
            a: p.main().a(),
            b: p.main().b(),
            c: p.main().c(),
            ahat: p.ahat(),
            chat: p.chat(),
        }
    }

    /// Stage vector of a non-root vertex: `Σ_j m_ij Π_children g_j`, with the
    /// coefficient matrix chosen by the vertex colour.
    fn stage_vector(&self, t: &BiColouredTree) -> Vec<f64> {
        let (m, leaf) = match t.colour {
            Colour::Black => (self.a, self.c),
            Colour::White => (self.ahat, self.chat),
        };
        if t.children.is_empty() {
            return leaf.to_vec();
        }
        let prod = self.children_product(t);
        m.matvec(&prod)
    }

    fn children_product(&self, t: &BiColouredTree) -> Vec<f64> {
        let mut prod = vec![1.0; self.b.len()];
        for ch in &t.children {
            for (p, g) in prod.iter_mut().zip(self.stage_vector(ch)) {
                *p *= g;
            }
        }
        prod
    }

    pub(crate) fn weight(&self, t: &BiColouredTree) -> f64 {
        let prod = self.children_product(t);
        self.b.iter().zip(prod).map(|(b, p)| b * p).sum()
    }
}

/// Elementary weight `φ(τ)` of a restricted tree for the pair.
pub fn elementary_weight(p: &PartitionedTableau, tree: &BiColouredTree) -> f64 {
    debug_assert!(tree.in_restricted_family());
    WeightCoefficients::from_pair(p).weight(tree)
}

#[derive(Debug, Clone)]
pub struct ConditionRow {
    pub tree: BiColouredTree,
    pub weight: f64,
    pub density: u64,
    pub residual: f64,
}

impl ConditionRow {
    pub fn target(&self) -> f64 {
        1.0 / self.density as f64
    }
}

/// Outcome of checking every order condition up to `order`.
#[derive(Debug, Clone)]
pub struct OrderReport {
    pub order: usize,
    pub tol: f64,
    pub rows: Vec<ConditionRow>,
}

impl OrderReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.residual <= self.tol)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionRow> {
        self.rows.iter().filter(move |r| r.residual > self.tol)
    }

    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

impl fmt::Display for OrderReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.tree.serialise().len())
            .max()
            .unwrap_or(4)
            .max(4);
        writeln!(
            f,
            "{:<width$}  {:>5}  {:>24}  {:>24}  {:>10}  {}",
            "tree", "order", "weight", "1/density", "residual", "status"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>5}  {:>24.17e}  {:>24.17e}  {:>10.3e}  {}",
                r.tree.serialise(),
                r.tree.order(),
                r.weight,
                r.target(),
                r.residual,
                if r.residual <= self.tol { "ok" } else { "FAIL" }
            )?;
        }
        if self.passed() {
            write!(
                f,
                "order >= {} certified: {} conditions within tol {:e}",
                self.order,
                self.rows.len(),
                self.tol
            )
        } else {
            write!(
                f,
                "order >= {} not certified: {} of {} conditions exceed tol {:e}",
                self.order,
                self.failures().count(),
                self.rows.len(),
                self.tol
            )
        }
    }
}

/// Checks `φ(τ) = 1/τ!` for every restricted tree with at most `order` vertices.
/// A failure means order `order` is not certified; the conditions are sufficient only.
pub fn verify_order(p: &PartitionedTableau, order: usize, tol: f64) -> OrderReport {
    assert!(order >= 1 && tol > 0.0);
    let coeffs = WeightCoefficients::from_pair(p);
    let rows = enumerate_tpy(order)
        .into_iter()
        .map(|tree| {
            let weight = coeffs.weight(&tree);
            let density = density(&tree);
            let residual = (weight - 1.0 / density as f64).abs();
            ConditionRow {
                tree,
                weight,
                density,
                residual,
            }
        })
        .collect();
    OrderReport { order, tol, rows }
}
