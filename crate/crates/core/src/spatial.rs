//! Bucketed point index for exact nearest-neighbor queries.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::graph::Point;

#[derive(Debug, Clone)]
pub struct PointIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<(Point, usize)>>,
    len: usize,
}

impl PointIndex {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0);
        Self { cell, buckets: HashMap::new(), len: 0 }
    }

    pub fn from_points(cell: f64, points: impl IntoIterator<Item = (Point, usize)>) -> Self {
        let mut idx = Self::new(cell);
        for (p, id) in points {
            idx.insert(p, id);
        }
        idx
    }

    fn key(&self, p: &Point) -> (i64, i64) {
        ((p.row / self.cell).floor() as i64, (p.col / self.cell).floor() as i64)
    }

    pub fn insert(&mut self, p: Point, id: usize) {
        let k = self.key(&p);
        self.buckets.entry(k).or_default().push((p, id));
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Nearest stored point. Equal distances resolve by (row, col), then id.
    pub fn nearest(&self, q: &Point) -> Option<(usize, f64)> {
        self.nearest_within(q, f64::INFINITY)
    }

    /// Like [`nearest`](Self::nearest) but ignores points farther than `max_dist`.
    pub fn nearest_within(&self, q: &Point, max_dist: f64) -> Option<(usize, f64)> {
        if self.len == 0 {
            return None;
        }
        let (kr, kc) = self.key(q);
        let mut best: Option<(f64, Point, usize)> = None;
        let mut ring = 0i64;
        let mut seen = 0usize;
        loop {
            for (r, c) in ring_cells(kr, kc, ring) {
                if let Some(bucket) = self.buckets.get(&(r, c)) {
                    seen += bucket.len();
                    for (p, id) in bucket {
                        let d = p.dist(q);
                        if d > max_dist {
                            continue;
                        }
                        let better = match &best {
                            None => true,
                            Some((bd, bp, bid)) => match d.total_cmp(bd) {
                                Ordering::Less => true,
                                Ordering::Greater => false,
                                Ordering::Equal => p.lex_cmp(bp).then(id.cmp(bid)) == Ordering::Less,
                            },
                        };
                        if better {
                            best = Some((d, *p, *id));
                        }
                    }
                }
            }
            // points outside rings 0..=ring lie at least ring * cell away
            if seen >= self.len {
                break;
            }
            if best.as_ref().is_some_and(|(d, _, _)| *d < ring as f64 * self.cell) {
                break;
            }
            if ring as f64 * self.cell > max_dist {
                break;
            }
            ring += 1;
        }
        best.map(|(d, _, id)| (id, d))
    }
}

fn ring_cells(r: i64, c: i64, k: i64) -> Vec<(i64, i64)> {
    if k == 0 {
        return vec![(r, c)];
    }
    let mut out = Vec::with_capacity(8 * k as usize);
    for dc in -k..=k {
        out.push((r - k, c + dc));
        out.push((r + k, c + dc));
    }
    for dr in -k + 1..k {
        out.push((r + dr, c - k));
        out.push((r + dr, c + k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(1..60);
            let pts: Vec<Point> =
                (0..n).map(|_| Point::new(rng.gen_range(0..50) as f64, rng.gen_range(0..50) as f64)).collect();
            let idx = PointIndex::from_points(4.0, pts.iter().copied().enumerate().map(|(i, p)| (p, i)));
            for _ in 0..50 {
                let q = Point::new(rng.gen_range(-10.0..60.0), rng.gen_range(-10.0..60.0));
                let (id, d) = idx.nearest(&q).unwrap();
                let mut bf: Vec<(f64, Point, usize)> = pts.iter().enumerate().map(|(i, p)| (p.dist(&q), *p, i)).collect();
                bf.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.lex_cmp(&b.1)).then(a.2.cmp(&b.2)));
                assert_eq!(id, bf[0].2);
                assert_eq!(d, bf[0].0);
            }
        }
    }

    #[test]
    fn radius_limit() {
        let idx = PointIndex::from_points(2.0, [(Point::new(0.0, 0.0), 7)]);
        assert_eq!(idx.nearest_within(&Point::new(0.0, 3.0), 2.0), None);
        assert_eq!(idx.nearest_within(&Point::new(0.0, 2.0), 2.0), Some((7, 2.0)));
    }
}
