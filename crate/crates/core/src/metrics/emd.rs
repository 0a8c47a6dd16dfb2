//! Earth mover's distance between two maps, solved exactly as a
//! transportation problem with the primal transportation simplex
//! (spanning-tree basis, node potentials, block pricing).

use super::fixation::to_distribution;
use crate::error::{Error, Result};
use crate::grid::{DenseMap, Grid};

/// Grids with a side above this are sum-pooled before the exact solve.
pub const EMD_EXACT_LIMIT: usize = 32;

const COST_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug)]
struct Cell {
    row: usize,
    col: usize,
    flow: f64,
}

struct Tree {
    n: usize,
    cells: Vec<Cell>,
    /// Basic cell indices touching each node (rows first, then columns).
    adj: Vec<Vec<usize>>,
}

impl Tree {
    fn node_col(&self, col: usize) -> usize {
        self.n + col
    }

    fn other_end(&self, cell: usize, node: usize) -> usize {
        let c = self.cells[cell];
        if node < self.n {
            self.n + c.col
        } else {
            c.row
        }
    }

    fn detach(&mut self, node: usize, cell: usize) {
        let list = &mut self.adj[node];
        let pos = list.iter().position(|&x| x == cell).expect("cell is adjacent");
        list.swap_remove(pos);
    }
}

/// Minimum cost of moving `supply` onto `demand` with per-unit `cost(i, j)`.
/// Both sides must be positive and have equal totals (a relative mismatch up
/// to 1e-9 is absorbed into the largest demand).
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 {
        return Err(Error::invalid("transport problem needs supply and demand"));
    }
    if supply.iter().chain(demand).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("transport masses must be positive and finite"));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if (total_s - total_d).abs() > 1e-9 * total_s.max(total_d) {
        return Err(Error::invalid(format!("unbalanced transport problem ({total_s} vs {total_d})")));
    }
    let mut demand = demand.to_vec();
    let big = (0..m).max_by(|&a, &b| demand[a].total_cmp(&demand[b])).unwrap_or(0);
    demand[big] += total_s - total_d;

    let costs: Vec<f64> = (0..n * m).map(|k| cost(k / m, k % m)).collect();
    let c = |i: usize, j: usize| costs[i * m + j];

    // north-west corner start
    let mut tree = Tree { n, cells: Vec::with_capacity(n + m - 1), adj: vec![Vec::new(); n + m] };
    let (mut i, mut j) = (0, 0);
    let (mut rs, mut rd) = (supply[0], demand[0]);
    loop {
        let last = i == n - 1 && j == m - 1;
        let flow = if last { rs.max(0.0) } else { rs.min(rd).max(0.0) };
        let id = tree.cells.len();
        tree.cells.push(Cell { row: i, col: j, flow });
        tree.adj[i].push(id);
        tree.adj[n + j].push(id);
        if last {
            break;
        }
        if (rs <= rd && i < n - 1) || j == m - 1 {
            rd -= rs;
            i += 1;
            rs = supply[i];
        } else {
            rs -= rd;
            j += 1;
            rd = demand[j];
        }
    }
    debug_assert_eq!(tree.cells.len(), n + m - 1);

    let nodes = n + m;
    let mut pot = vec![0.0; nodes];
    let mut parent_cell = vec![usize::MAX; nodes];
    let mut parent = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut stack = Vec::with_capacity(nodes);
    let block = (n + m).max(((n * m) as f64).sqrt() as usize).min(n * m);
    let mut scan_pos = 0usize;
    let bland_after = 50 * (n + m) + 1000;
    let max_iter = 200 * (n + m) * (n + m) + 100_000;
    let mut degenerate_run = 0usize;

    for _ in 0..max_iter {
        // potentials: u_row + v_col = cost on every basic cell
        parent_cell[0] = usize::MAX;
        parent[0] = usize::MAX;
        depth[0] = 0;
        pot[0] = 0.0;
        stack.clear();
        stack.push(0);
        let mut seen = 1;
        while let Some(node) = stack.pop() {
            for k in 0..tree.adj[node].len() {
                let cell = tree.adj[node][k];
                if cell == parent_cell[node] {
                    continue;
                }
                let other = tree.other_end(cell, node);
                let cc = c(tree.cells[cell].row, tree.cells[cell].col);
                pot[other] = cc - pot[node];
                parent_cell[other] = cell;
                parent[other] = node;
                depth[other] = depth[node] + 1;
                seen += 1;
                stack.push(other);
            }
        }
        debug_assert_eq!(seen, nodes, "basis must be a spanning tree");

        let bland = degenerate_run > bland_after;
        let reduced = |k: usize| c(k / m, k % m) - pot[k / m] - pot[n + k % m];
        let entering = if bland {
            (0..n * m).find(|&k| reduced(k) < -COST_TOL)
        } else {
            let mut best: Option<(usize, f64)> = None;
            let mut scanned = 0;
            while scanned < n * m {
                let end = (scanned + block).min(n * m);
                for s in scanned..end {
                    let k = (scan_pos + s) % (n * m);
                    let d = reduced(k);
                    if d < -COST_TOL && best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((k, d));
                    }
                }
                scanned = end;
                if best.is_some() {
                    break;
                }
            }
            scan_pos = (scan_pos + scanned) % (n * m);
            best.map(|(k, _)| k)
        };
        let Some(k) = entering else {
            let total = tree.cells.iter().map(|cell| cell.flow * c(cell.row, cell.col)).sum::<f64>();
            return Ok(total.max(0.0));
        };
        let (er, ec) = (k / m, k % m);

        // cycle: entering cell, then the tree path from the column node back to the row node
        let (mut a, mut b) = (tree.node_col(ec), er);
        let mut from_col = Vec::new();
        let mut from_row = Vec::new();
        while depth[a] > depth[b] {
            from_col.push(parent_cell[a]);
            a = parent[a];
        }
        while depth[b] > depth[a] {
            from_row.push(parent_cell[b]);
            b = parent[b];
        }
        while a != b {
            from_col.push(parent_cell[a]);
            a = parent[a];
            from_row.push(parent_cell[b]);
            b = parent[b];
        }
        from_row.reverse();
        let path: Vec<usize> = from_col.into_iter().chain(from_row).collect();
        // path[0], path[2], ... lose flow
        let mut leave = usize::MAX;
        let mut theta = f64::INFINITY;
        for &cell in path.iter().step_by(2) {
            let f = tree.cells[cell].flow;
            let better = f < theta
                || (bland && f == theta && {
                    let (x, y) = (tree.cells[cell], tree.cells[leave]);
                    (x.row, x.col) < (y.row, y.col)
                });
            if better {
                theta = f;
                leave = cell;
            }
        }
        degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };
        for (idx, &cell) in path.iter().enumerate() {
            let f = &mut tree.cells[cell].flow;
            if idx % 2 == 0 {
                *f = (*f - theta).max(0.0);
            } else {
                *f += theta;
            }
        }
        let old = tree.cells[leave];
        tree.detach(old.row, leave);
        tree.detach(n + old.col, leave);
        tree.cells[leave] = Cell { row: er, col: ec, flow: theta };
        tree.adj[er].push(leave);
        tree.adj[n + ec].push(leave);
    }
    Err(Error::invalid("transport simplex did not converge"))
}

/// Exact EMD between two distributions on the same grid with Euclidean
/// ground distance between pixel centres (in pixels). Both grids must be
/// nonnegative with equal positive totals.
pub fn emd_exact(p: &Grid<f64>, q: &Grid<f64>) -> Result<f64> {
    p.check_same_dims(q, "EMD")?;
    if p.data() == q.data() {
        return Ok(0.0);
    }
    let w = p.width();
    let src: Vec<usize> = (0..p.len()).filter(|&i| p.data()[i] > 0.0).collect();
    let dst: Vec<usize> = (0..q.len()).filter(|&i| q.data()[i] > 0.0).collect();
    let supply: Vec<f64> = src.iter().map(|&i| p.data()[i]).collect();
    let demand: Vec<f64> = dst.iter().map(|&i| q.data()[i]).collect();
    transport_cost(&supply, &demand, |a, b| {
        let (ia, ib) = (src[a], dst[b]);
        let dr = (ia / w) as f64 - (ib / w) as f64;
        let dc = (ia % w) as f64 - (ib % w) as f64;
        (dr * dr + dc * dc).sqrt()
    })
}

fn sum_pool(values: &[f64], h: usize, w: usize, f: usize) -> Grid<f64> {
    let (ph, pw) = (h.div_ceil(f), w.div_ceil(f));
    let mut out = Grid::filled(ph, pw, 0.0);
    for r in 0..h {
        for c in 0..w {
            let v = out.get(r / f, c / f) + values[r * w + c];
            out.set(r / f, c / f, v);
        }
    }
    out
}

/// EMD between the two maps after scaling each to sum 1. Maps with a side
/// above [`EMD_EXACT_LIMIT`] are sum-pooled by the smallest integer factor
/// that brings them within the limit; the pooled distance is reported in
/// original pixels (multiplied by the factor).
pub fn emd(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    pred.check_same_dims(gt, "EMD")?;
    let (h, w) = pred.dims();
    if h * w == 0 {
        return Err(Error::EmptySample);
    }
    let p = to_distribution(pred.data());
    let q = to_distribution(gt.data());
    let f = h.max(w).div_ceil(EMD_EXACT_LIMIT).max(1);
    if f == 1 {
        return emd_exact(&Grid::new(h, w, p)?, &Grid::new(h, w, q)?);
    }
    Ok(f as f64 * emd_exact(&sum_pool(&p, h, w, f), &sum_pool(&q, h, w, f))?)
}
