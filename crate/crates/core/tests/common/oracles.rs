//! Brute-force reference implementations of the metrics. Written for
//! clarity over speed: per-pixel loops, one threshold at a time, and a dense
//! tableau simplex for the transport problem.

pub const EPS: f64 = f64::EPSILON;

pub fn mae(p: &[f64], g: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - g[i]).abs();
    }
    s / p.len() as f64
}

pub fn r_mae(p: &[u8], g: &[u8]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] as f64 - g[i] as f64).abs();
    }
    s / p.len() as f64
}

pub fn mean_f(p: &[f64], g: &[f64], beta_sq: f64) -> f64 {
    let mut total = 0.0;
    for k in 1..=255 {
        let t = k as f64 / 256.0;
        let (mut tp, mut pp, mut gp) = (0.0, 0.0, 0.0);
        for i in 0..p.len() {
            let fm = p[i] >= t;
            if fm {
                pp += 1.0;
            }
            if g[i] == 1.0 {
                gp += 1.0;
                if fm {
                    tp += 1.0;
                }
            }
        }
        let prec = if pp > 0.0 { tp / pp } else { 0.0 };
        let rec = if gp > 0.0 { tp / gp } else { 0.0 };
        let f = if beta_sq * prec + rec > 0.0 { (1.0 + beta_sq) * prec * rec / (beta_sq * prec + rec) } else { 0.0 };
        total += f;
    }
    total / 255.0
}

pub fn mean_e(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let gsum: f64 = g.iter().sum();
    let mut total = 0.0;
    for k in 1..=255 {
        let t = k as f64 / 256.0;
        let fm: Vec<f64> = p.iter().map(|&v| if v >= t { 1.0 } else { 0.0 }).collect();
        let mut enhanced = vec![0.0; p.len()];
        if gsum == 0.0 {
            for i in 0..p.len() {
                enhanced[i] = 1.0 - fm[i];
            }
        } else if gsum == n {
            enhanced.copy_from_slice(&fm);
        } else {
            let mfm = fm.iter().sum::<f64>() / n;
            let mgt = gsum / n;
            for i in 0..p.len() {
                let a = fm[i] - mfm;
                let b = g[i] - mgt;
                let align = 2.0 * a * b / (a * a + b * b + EPS);
                enhanced[i] = (align + 1.0).powi(2) / 4.0;
            }
        }
        total += enhanced.iter().sum::<f64>() / n;
    }
    total / 255.0
}

/// Column-major matrix, indexed 1-based like the reference toolbox.
struct Mat {
    rows: usize,
    cols: usize,
    v: Vec<f64>,
}

impl Mat {
    fn from_row_major(h: usize, w: usize, d: &[f64]) -> Mat {
        let mut v = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                v[c * h + r] = d[r * w + c];
            }
        }
        Mat { rows: h, cols: w, v }
    }
    fn at(&self, r: usize, c: usize) -> f64 {
        self.v[(c - 1) * self.rows + (r - 1)]
    }
    /// Rows `r0..=r1`, columns `c0..=c1` (1-based, inclusive).
    fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Vec<f64> {
        let mut out = Vec::new();
        if r0 > r1 || c0 > c1 {
            return out;
        }
        for c in c0..=c1 {
            for r in r0..=r1 {
                out.push(self.at(r, c));
            }
        }
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std1(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn object(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    let x = mean(vals);
    2.0 * x / (x * x + 1.0 + std1(vals) + EPS)
}

pub fn s_object(p: &[f64], g: &[f64]) -> f64 {
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for i in 0..p.len() {
        if g[i] == 1.0 {
            fg.push(p[i]);
        } else {
            bg.push(1.0 - p[i]);
        }
    }
    let u = mean(g);
    u * object(&fg) + (1.0 - u) * object(&bg)
}

fn ssim(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sx += (x[i] - mx).powi(2);
        sy += (y[i] - my).powi(2);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    sx /= n - 1.0 + EPS;
    sy /= n - 1.0 + EPS;
    sxy /= n - 1.0 + EPS;
    let a = 4.0 * mx * my * sxy;
    let b = (mx * mx + my * my) * (sx + sy);
    if a != 0.0 {
        a / (b + EPS)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn s_region(h: usize, w: usize, p: &[f64], g: &[f64]) -> f64 {
    let gm = Mat::from_row_major(h, w, g);
    let pm = Mat::from_row_major(h, w, p);
    let total: f64 = g.iter().sum();
    let (x, y) = if total == 0.0 {
        ((w as f64 / 2.0).round() as usize, (h as f64 / 2.0).round() as usize)
    } else {
        let mut xs = 0.0;
        for c in 1..=w {
            let colsum: f64 = (1..=h).map(|r| gm.at(r, c)).sum();
            xs += colsum * c as f64;
        }
        let mut ys = 0.0;
        for r in 1..=h {
            let rowsum: f64 = (1..=w).map(|c| gm.at(r, c)).sum();
            ys += rowsum * r as f64;
        }
        ((xs / total).round() as usize, (ys / total).round() as usize)
    };
    let area = (h * w) as f64;
    let w1 = (x * y) as f64 / area;
    let w2 = ((w - x) * y) as f64 / area;
    let w3 = (x * (h - y)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let quads = [(1, y, 1, x, w1), (1, y, x + 1, w, w2), (y + 1, h, 1, x, w3), (y + 1, h, x + 1, w, w4)];
    let mut q = 0.0;
    for (r0, r1, c0, c1, wt) in quads {
        let pb = pm.block(r0, r1, c0, c1);
        if pb.is_empty() {
            continue;
        }
        q += wt * ssim(&pb, &gm.block(r0, r1, c0, c1));
    }
    q
}

pub fn s_measure(h: usize, w: usize, p: &[f64], g: &[f64], alpha: f64) -> f64 {
    let y = mean(g);
    if y == 0.0 {
        return 1.0 - mean(p);
    }
    if y == 1.0 {
        return mean(p);
    }
    let q = alpha * s_object(p, g) + (1.0 - alpha) * s_region(h, w, p, g);
    if q < 0.0 {
        0.0
    } else {
        q
    }
}

fn normalize_sum(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter().map(|x| x / s).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

pub fn sim(p: &[f64], g: &[f64]) -> f64 {
    let (a, b) = (normalize_sum(p), normalize_sum(g));
    (0..a.len()).map(|i| if a[i] < b[i] { a[i] } else { b[i] }).sum()
}

pub fn cc(p: &[f64], g: &[f64]) -> f64 {
    let zp = zscore(p);
    let zg = zscore(g);
    match (zp, zg) {
        (Some(a), Some(b)) => (0..a.len()).map(|i| a[i] * b[i]).sum::<f64>() / (a.len() - 1) as f64,
        _ => 0.0,
    }
}

fn zscore(v: &[f64]) -> Option<Vec<f64>> {
    let m = mean(v);
    let s = std1(v);
    if s == 0.0 || v.iter().all(|&x| x == v[0]) {
        return None;
    }
    Some(v.iter().map(|x| (x - m) / s).collect())
}

pub fn kld(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let reg = |v: &[f64]| -> Vec<f64> {
        let d = normalize_sum(v);
        d.iter().map(|x| (x + 1e-12) / (1.0 + 1e-12 * n)).collect()
    };
    let (pp, gg) = (reg(p), reg(g));
    (0..pp.len()).map(|i| gg[i] * (gg[i].ln() - pp[i].ln())).sum::<f64>().max(0.0)
}

pub fn nss(p: &[f64], pts: &[usize]) -> f64 {
    match zscore(p) {
        None => 0.0,
        Some(z) => pts.iter().map(|&i| z[i]).sum::<f64>() / pts.len() as f64,
    }
}

/// Exhaustive scan: for each distinct fixated value (highest first), count
/// fixated and non-fixated pixels at or above it with a full pass.
pub fn auc_judd(p: &[f64], pts: &[usize]) -> f64 {
    let nf = pts.len() as f64;
    let nn = (p.len() - pts.len()) as f64;
    let mut th: Vec<f64> = pts.iter().map(|&i| p[i]).collect();
    th.sort_by(|a, b| b.partial_cmp(a).unwrap());
    th.dedup();
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    for &t in &th {
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..p.len() {
            if p[i] >= t {
                if pts.contains(&i) {
                    a += 1.0;
                } else {
                    b += 1.0;
                }
            }
        }
        ys.push(a / nf);
        xs.push(b / nn);
    }
    xs.push(1.0);
    ys.push(1.0);
    let mut area = 0.0;
    for i in 1..xs.len() {
        area += (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) * 0.5;
    }
    area
}

/// ROC area over the fixed ladder `max, ..., step, 0` by direct counting.
pub fn auc_ladder(pos: &[f64], neg: &[f64], step: f64) -> f64 {
    let top = pos.iter().chain(neg).cloned().fold(0.0, f64::max);
    let mut ts = Vec::new();
    let mut k = 0usize;
    while (k as f64) * step <= top + 1e-10 * step {
        ts.push(k as f64 * step);
        k += 1;
    }
    ts.reverse();
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    for t in ts {
        ys.push(pos.iter().filter(|&&v| v >= t).count() as f64 / pos.len() as f64);
        xs.push(neg.iter().filter(|&&v| v >= t).count() as f64 / neg.len() as f64);
    }
    xs.push(1.0);
    ys.push(1.0);
    let mut area = 0.0;
    for i in 1..xs.len() {
        area += (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) * 0.5;
    }
    area
}

/// Dense two-phase simplex for `min c.x, A x = b, x >= 0` (b >= 0).
/// Dantzig pricing, falling back to Bland's rule on long degenerate runs.
pub fn lp_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let rows = a.len();
    let nv = c.len();
    let width = nv + rows + 1;
    let mut t = vec![vec![0.0; width]; rows];
    for i in 0..rows {
        t[i][..nv].copy_from_slice(&a[i]);
        t[i][nv + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    let mut basis: Vec<usize> = (nv..nv + rows).collect();

    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| {
        let mut degenerate = 0usize;
        loop {
            // reduced costs
            let mut red = vec![0.0; allowed];
            for j in 0..allowed {
                let mut z = 0.0;
                for i in 0..rows {
                    z += cost[basis[i]] * t[i][j];
                }
                red[j] = cost[j] - z;
            }
            let bland = degenerate > 50;
            let mut enter = None;
            let mut best = -1e-10;
            for j in 0..allowed {
                if red[j] < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = red[j];
                }
            }
            let Some(e) = enter else { return };
            let mut leave = None;
            let mut ratio = f64::INFINITY;
            for i in 0..rows {
                if t[i][e] > 1e-12 {
                    let r = t[i][width - 1] / t[i][e];
                    if r < ratio - 1e-15 || (r <= ratio + 1e-15 && leave.is_some_and(|l: usize| basis[i] < basis[l])) {
                        ratio = r;
                        leave = Some(i);
                    }
                }
            }
            let l = leave.expect("bounded problem");
            degenerate = if ratio < 1e-15 { degenerate + 1 } else { 0 };
            let piv = t[l][e];
            for v in t[l].iter_mut() {
                *v /= piv;
            }
            let prow = t[l].clone();
            for i in 0..rows {
                if i != l {
                    let f = t[i][e];
                    if f != 0.0 {
                        for (x, y) in t[i].iter_mut().zip(&prow) {
                            *x -= f * y;
                        }
                    }
                }
            }
            basis[l] = e;
        }
    };

    // phase 1: minimise the artificials
    let mut c1 = vec![0.0; nv + rows];
    for v in c1.iter_mut().skip(nv) {
        *v = 1.0;
    }
    run(&mut t, &mut basis, &c1, nv + rows);
    // drive remaining (zero) artificials out when possible
    for i in 0..rows {
        if basis[i] >= nv {
            if let Some(j) = (0..nv).find(|&j| t[i][j].abs() > 1e-9) {
                let piv = t[i][j];
                for v in t[i].iter_mut() {
                    *v /= piv;
                }
                let prow = t[i].clone();
                for k in 0..rows {
                    if k != i {
                        let f = t[k][j];
                        if f != 0.0 {
                            for (x, y) in t[k].iter_mut().zip(&prow) {
                                *x -= f * y;
                            }
                        }
                    }
                }
                basis[i] = j;
            }
        }
    }
    let mut c2 = vec![0.0; nv + rows];
    c2[..nv].copy_from_slice(c);
    for v in c2.iter_mut().skip(nv) {
        *v = 1e6;
    }
    run(&mut t, &mut basis, &c2, nv);
    (0..rows).map(|i| c2[basis[i]] * t[i][width - 1]).sum()
}

/// EMD on an `h x w` grid through the generic LP: one variable per
/// (source pixel, target pixel) pair.
pub fn emd(h: usize, w: usize, p: &[f64], g: &[f64]) -> f64 {
    let (a, b) = (normalize_sum(p), normalize_sum(g));
    if a == b {
        return 0.0;
    }
    let src: Vec<usize> = (0..h * w).filter(|&i| a[i] > 0.0).collect();
    let dst: Vec<usize> = (0..h * w).filter(|&i| b[i] > 0.0).collect();
    let (n, m) = (src.len(), dst.len());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (i, &s) in src.iter().enumerate() {
        let mut r = vec![0.0; n * m];
        for j in 0..m {
            r[i * m + j] = 1.0;
        }
        rows.push(r);
        rhs.push(a[s]);
    }
    // the last column constraint is implied by the others
    for (j, &d) in dst.iter().enumerate().take(m - 1) {
        let mut r = vec![0.0; n * m];
        for i in 0..n {
            r[i * m + j] = 1.0;
        }
        rows.push(r);
        rhs.push(b[d]);
    }
    let mut cost = vec![0.0; n * m];
    for (i, &s) in src.iter().enumerate() {
        for (j, &d) in dst.iter().enumerate() {
            let dr = (s / w) as f64 - (d / w) as f64;
            let dc = (s % w) as f64 - (d % w) as f64;
            cost[i * m + j] = (dr * dr + dc * dc).sqrt();
        }
    }
    lp_min(&rows, &rhs, &cost)
}
