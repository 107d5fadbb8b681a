use crate::error::{invalid, Result};
use crate::imaging::BinaryMask;

/// Directed Hausdorff distance `max_{x in X} min_{y in Y} |x - y|`.
///
/// The inner scan stops as soon as a point closer than the running maximum is
/// found, since that `x` can no longer raise the result.
pub fn hausdorff_directed(xs: &[(f64, f64)], ys: &[(f64, f64)]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return invalid("Hausdorff distance of an empty point set");
    }
    let mut cmax = 0.0f64;
    for &(xa, xb) in xs {
        let mut cmin = f64::INFINITY;
        for &(ya, yb) in ys {
            let d = (xa - ya) * (xa - ya) + (xb - yb) * (xb - yb);
            if d < cmin {
                cmin = d;
                if cmin <= cmax {
                    break;
                }
            }
        }
        cmax = cmax.max(cmin);
    }
    Ok(cmax.sqrt())
}

/// Foreground pixel coordinates as points.
pub fn mask_points(mask: &BinaryMask) -> Vec<(f64, f64)> {
    mask.points()
        .into_iter()
        .map(|(y, x)| (y as f64, x as f64))
        .collect()
}

/// Neighbours P2..P9, clockwise from north. Outside pixels count as background.
fn ring(m: &BinaryMask, y: usize, x: usize) -> [bool; 8] {
    let (h, w) = m.dims();
    let at = |dy: isize, dx: isize| {
        let (yy, xx) = (y as isize + dy, x as isize + dx);
        yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w && m.get(yy as usize, xx as usize)
    };
    [
        at(-1, 0),
        at(-1, 1),
        at(0, 1),
        at(1, 1),
        at(1, 0),
        at(1, -1),
        at(0, -1),
        at(-1, -1),
    ]
}

/// Zhang-Suen thinning, iterated to a fixed point.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut m = mask.clone();
    let (h, w) = m.dims();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if !m.get(y, x) {
                        continue;
                    }
                    let p = ring(&m, y, x);
                    let b = p.iter().filter(|&&v| v).count();
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                    let keep = if pass == 0 {
                        (p2 && p4 && p6) || (p4 && p6 && p8)
                    } else {
                        (p2 && p4 && p8) || (p2 && p6 && p8)
                    };
                    if (2..=6).contains(&b) && a == 1 && !keep {
                        remove.push((y, x));
                    }
                }
            }
            changed |= !remove.is_empty();
            for (y, x) in remove {
                m.set(y, x, false);
            }
        }
        if !changed {
            return m;
        }
    }
}

/// Disc of the given radius around the image centre.
pub fn circular_region(h: usize, w: usize, radius: f64) -> BinaryMask {
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    BinaryMask::from_fn(h, w, |y, x| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        dy * dy + dx * dx <= radius * radius
    })
}

/// Branches shorter than this many pixels are ignored by the tortuosity measure.
pub const MIN_BRANCH_PIXELS: usize = 5;
/// Arc length is measured between every `ARC_STRIDE`-th centreline pixel, which
/// removes most of the staircase bias of an 8-connected chain.
pub const ARC_STRIDE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VesselMetrics {
    /// Centreline pixels per region pixel.
    pub vld: f64,
    /// Mean arc/chord ratio over branches; `None` when no branch qualifies.
    pub vt: Option<f64>,
}

const OFFSETS: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

fn neighbours(m: &BinaryMask, y: usize, x: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let (h, w) = m.dims();
    OFFSETS.iter().filter_map(move |&(dy, dx)| {
        let (yy, xx) = (y as isize + dy, x as isize + dx);
        (yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w && m.get(yy as usize, xx as usize))
            .then_some((yy as usize, xx as usize))
    })
}

fn dist(a: (usize, usize), b: (usize, usize)) -> f64 {
    let (dy, dx) = (a.0 as f64 - b.0 as f64, a.1 as f64 - b.1 as f64);
    (dy * dy + dx * dx).sqrt()
}

/// Orders the pixels of one branch by walking from an end point.
fn trace(branch: &BinaryMask, start: (usize, usize)) -> Vec<(usize, usize)> {
    let mut seen = BinaryMask::empty(branch.height(), branch.width());
    let mut path = vec![start];
    seen.set(start.0, start.1, true);
    let mut cur = start;
    loop {
        // Prefer 4-neighbours so diagonal shortcuts do not skip pixels.
        let next = neighbours(branch, cur.0, cur.1)
            .filter(|&(y, x)| !seen.get(y, x))
            .min_by(|&a, &b| dist(cur, a).total_cmp(&dist(cur, b)));
        match next {
            Some(p) => {
                seen.set(p.0, p.1, true);
                path.push(p);
                cur = p;
            }
            None => return path,
        }
    }
}

fn tortuosity(path: &[(usize, usize)]) -> Option<f64> {
    let chord = dist(path[0], path[path.len() - 1]);
    if chord == 0.0 {
        return None;
    }
    let mut arc = 0.0;
    let mut prev = path[0];
    for i in (ARC_STRIDE..path.len()).step_by(ARC_STRIDE) {
        arc += dist(prev, path[i]);
        prev = path[i];
    }
    arc += dist(prev, path[path.len() - 1]);
    Some(arc / chord)
}

/// Vessel length density and tortuosity of a vessel mask inside a region.
pub fn vessel_metrics(mask: &BinaryMask, region: &BinaryMask) -> Result<VesselMetrics> {
    if mask.dims() != region.dims() {
        return invalid(format!("mask {:?} and region {:?} differ", mask.dims(), region.dims()));
    }
    if region.is_empty() {
        return invalid("empty analysis region");
    }
    let skel = skeletonize(mask);
    let (h, w) = skel.dims();
    let inside = BinaryMask::from_fn(h, w, |y, x| skel.get(y, x) && region.get(y, x));
    let vld = inside.count() as f64 / region.count() as f64;

    // Split the centreline into branches by deleting junction pixels: those
    // where three or more separate runs of neighbours meet. Counting runs
    // rather than neighbours keeps staircase corners out.
    let branches = BinaryMask::from_fn(h, w, |y, x| {
        if !inside.get(y, x) {
            return false;
        }
        let p = ring(&inside, y, x);
        (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count() < 3
    });
    let mut seen = BinaryMask::empty(h, w);
    let mut ratios = Vec::new();
    for (y0, x0) in branches.points() {
        if seen.get(y0, x0) {
            continue;
        }
        let mut component = vec![(y0, x0)];
        seen.set(y0, x0, true);
        let mut i = 0;
        while i < component.len() {
            let (y, x) = component[i];
            for (yy, xx) in neighbours(&branches, y, x) {
                if !seen.get(yy, xx) {
                    seen.set(yy, xx, true);
                    component.push((yy, xx));
                }
            }
            i += 1;
        }
        if component.len() < MIN_BRANCH_PIXELS {
            continue;
        }
        let mut only = BinaryMask::empty(h, w);
        for &(y, x) in &component {
            only.set(y, x, true);
        }
        // Closed loops have no end point; start anywhere.
        let start = component
            .iter()
            .copied()
            .find(|&(y, x)| neighbours(&only, y, x).count() <= 1)
            .unwrap_or(component[0]);
        if let Some(r) = tortuosity(&trace(&only, start)) {
            ratios.push(r);
        }
    }
    let vt = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
    Ok(VesselMetrics { vld, vt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn hausdorff_reference_cases() {
        let xs = [(0.0, 0.0), (1.0, 2.0)];
        assert_eq!(hausdorff_directed(&xs, &xs).unwrap(), 0.0);
        assert_eq!(hausdorff_directed(&[(0.0, 0.0)], &[(3.0, 4.0)]).unwrap(), 5.0);
        assert!(hausdorff_directed(&[], &xs).is_err());
        // Directed: a far point in Y does not matter.
        assert_eq!(hausdorff_directed(&[(0.0, 0.0)], &[(0.0, 1.0), (50.0, 50.0)]).unwrap(), 1.0);
    }

    #[test]
    fn skeleton_of_bar_is_centreline() {
        assert!(skeletonize(&BinaryMask::empty(8, 8)).is_empty());
        let bar = BinaryMask::from_fn(9, 30, |y, x| (3..6).contains(&y) && (5..25).contains(&x));
        let s = skeletonize(&bar);
        assert!(s.points().iter().all(|&(y, x)| bar.get(y, x)));
        assert!(s.points().iter().all(|&(y, _)| y == 4));
        // End effects: each end of the centreline retreats by at most 2 px.
        let xs: Vec<usize> = s.points().iter().map(|p| p.1).collect();
        assert_eq!(xs.len(), xs[xs.len() - 1] - xs[0] + 1);
        assert!(xs[0] - 5 <= 2 && 24 - xs[xs.len() - 1] <= 2, "{xs:?}");
        assert_eq!(skeletonize(&s), s);
    }

    #[test]
    fn straight_line_density_and_tortuosity() {
        let line = BinaryMask::from_fn(10, 10, |y, _| y == 4);
        let region = BinaryMask::from_fn(10, 10, |_, _| true);
        let m = vessel_metrics(&line, &region).unwrap();
        assert!((m.vld - 0.1).abs() < 1e-12);
        assert!((m.vt.unwrap() - 1.0).abs() < 1e-12);
        let none = vessel_metrics(&BinaryMask::empty(10, 10), &region).unwrap();
        assert_eq!(none.vld, 0.0);
        assert_eq!(none.vt, None);
        assert!(vessel_metrics(&line, &BinaryMask::empty(10, 10)).is_err());
    }

    #[test]
    fn semicircle_tortuosity() {
        for r in [15.0f64, 25.0, 40.0] {
            let side = (2.0 * r) as usize + 10;
            let c = side as f64 / 2.0;
            let mut m = BinaryMask::empty(side, side);
            for k in 0..=4000 {
                let t = PI * k as f64 / 4000.0;
                m.set((c - r * t.sin()).round() as usize, (c + r * t.cos()).round() as usize, true);
            }
            let region = circular_region(side, side, side as f64);
            let vt = vessel_metrics(&m, &region).unwrap().vt.unwrap();
            assert!((vt - PI / 2.0).abs() <= 0.05, "r={r} vt={vt}");
        }
    }

    #[test]
    fn circular_region_is_centred() {
        let r = circular_region(21, 21, 5.0);
        assert!(r.get(10, 10) && r.get(10, 15) && !r.get(10, 16) && !r.get(0, 0));
        assert_eq!(r.count(), 81);
    }
}
