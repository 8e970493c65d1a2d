use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::eval::ScaledCascade;
use super::integral::IntegralImage;
use super::CascadeModel;
use crate::frame::Frame;
use crate::geom::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionKind {
    Face,
    Eye,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: Rect,
    pub kind: DetectionKind,
    pub neighbor_count: u32,
}

/// Scan parameters for [`detect`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub kind: DetectionKind,
    pub scale_factor: f64,
    pub min_neighbors: u32,
    /// Smallest window (w, h) considered.
    pub min_size: (u32, u32),
    #[serde(default)]
    pub max_size: Option<(u32, u32)>,
    #[serde(default)]
    pub search_roi: Option<Rect>,
}

impl DetectParams {
    /// Face defaults: scale factor 1.1, 3 neighbours, minimum size 1/8 of the
    /// frame height.
    pub fn faces(frame_height: u32) -> Self {
        let m = (frame_height / 8).max(1);
        Self {
            kind: DetectionKind::Face,
            scale_factor: 1.1,
            min_neighbors: 3,
            min_size: (m, m),
            max_size: None,
            search_roi: None,
        }
    }

    pub fn eyes(roi: Rect) -> Self {
        Self {
            kind: DetectionKind::Eye,
            scale_factor: 1.1,
            min_neighbors: 3,
            min_size: (0, 0),
            max_size: None,
            search_roi: Some(roi),
        }
    }
}

/// Multi-scale sliding-window detection over a frame.
pub fn detect(model: &CascadeModel, frame: &Frame, params: &DetectParams) -> Vec<Detection> {
    detect_in(model, &IntegralImage::from_frame(frame), params)
}

/// As [`detect`], reusing an already built integral image.
///
/// Windows grow from the base size by `scale_factor`; the window step at
/// scale `s` is `max(1, round(s))`. Raw hits are grouped, groups smaller than
/// `min_neighbors` dropped, and the averaged boxes returned largest first.
pub fn detect_in(model: &CascadeModel, ii: &IntegralImage, params: &DetectParams) -> Vec<Detection> {
    assert!(params.scale_factor > 1.0, "scale_factor must exceed 1");
    let frame_rect = Rect::new(0, 0, ii.width(), ii.height());
    let roi = params
        .search_roi
        .map(|r| r.clip_to(ii.width(), ii.height()))
        .unwrap_or(frame_rect);
    let mut hits = Vec::new();
    if roi.is_empty() {
        return Vec::new();
    }
    let mut scale = 1.0f64;
    loop {
        let cascade = ScaledCascade::new(model, scale, ii.stride());
        let (ww, wh) = cascade.window_size();
        if ww > roi.w || wh > roi.h {
            break;
        }
        if let Some((mw, mh)) = params.max_size {
            if ww > mw || wh > mh {
                break;
            }
        }
        if ww >= params.min_size.0 && wh >= params.min_size.1 {
            let step = (libm::round(scale) as u32).max(1);
            let mut y = roi.y;
            while y + wh <= roi.bottom() {
                let mut x = roi.x;
                while x + ww <= roi.right() {
                    if cascade.accepts(ii, x, y) {
                        hits.push(Rect::new(x, y, ww, wh));
                    }
                    x += step;
                }
                y += step;
            }
        }
        scale *= params.scale_factor;
    }
    group_rectangles(&hits, params.min_neighbors)
        .into_iter()
        .map(|(bbox, n)| Detection {
            bbox,
            kind: params.kind,
            neighbor_count: n,
        })
        .collect()
}

fn similar(a: &Rect, b: &Rect) -> bool {
    let delta = 0.2 * f64::from(a.w.min(b.w));
    let close = |p: u32, q: u32| f64::from(p.abs_diff(q)) < delta;
    close(a.x, b.x) && close(a.y, b.y) && close(a.right(), b.right()) && close(a.bottom(), b.bottom())
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Clusters overlapping hits (transitively) and averages each cluster.
///
/// Returns `(box, members)` for clusters with at least `min_neighbors`
/// members, sorted by area descending, then top-to-bottom, left-to-right.
pub fn group_rectangles(hits: &[Rect], min_neighbors: u32) -> Vec<(Rect, u32)> {
    let n = hits.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if similar(&hits[i], &hits[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = ri.min(rj);
                }
            }
        }
    }
    // accumulate (x, y, w, h, count) per root
    let mut acc: Vec<[u64; 5]> = alloc::vec![[0; 5]; n];
    for (i, r) in hits.iter().enumerate() {
        let root = find(&mut parent, i);
        let a = &mut acc[root];
        a[0] += u64::from(r.x);
        a[1] += u64::from(r.y);
        a[2] += u64::from(r.w);
        a[3] += u64::from(r.h);
        a[4] += 1;
    }
    let avg = |s: u64, c: u64| ((2 * s + c) / (2 * c)) as u32;
    let mut groups: Vec<(Rect, u32)> = acc
        .iter()
        .filter(|a| a[4] > 0 && a[4] >= u64::from(min_neighbors))
        .map(|a| {
            let c = a[4];
            (
                Rect::new(avg(a[0], c), avg(a[1], c), avg(a[2], c), avg(a[3], c)),
                c as u32,
            )
        })
        .collect();
    groups.sort_by(|a, b| {
        b.0.area()
            .cmp(&a.0.area())
            .then(a.0.y.cmp(&b.0.y))
            .then(a.0.x.cmp(&b.0.x))
    });
    groups
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::single_stage;
    use super::*;
    use alloc::vec;

    #[test]
    fn blank_frame_has_no_detections() {
        // a feature with both weights on a flat image gives value 0; with
        // the stump threshold at 0 every weak votes right (+1) and the stage
        // threshold 2 can never be met
        let frame = Frame::filled(0, 0, 64, 48, [128, 128, 128]);
        let params = DetectParams::faces(48);
        assert!(detect(&single_stage(2.0), &frame, &params).is_empty());
    }

    #[test]
    fn grouping_merges_close_boxes_and_drops_small_groups() {
        let hits = vec![
            Rect::new(10, 10, 40, 40),
            Rect::new(12, 11, 40, 40),
            Rect::new(11, 13, 42, 42),
            Rect::new(100, 100, 20, 20),
        ];
        let groups = group_rectangles(&hits, 2);
        assert_eq!(groups, vec![(Rect::new(11, 11, 41, 41), 3)]);
        let all = group_rectangles(&hits, 0);
        assert_eq!(all.len(), 2);
        assert_eq!(all[1], (Rect::new(100, 100, 20, 20), 1));
    }

    #[test]
    fn grouping_threshold_is_strict() {
        // sides differ by exactly 20% of the smaller width: not similar
        let a = Rect::new(0, 0, 10, 10);
        let b = Rect::new(2, 0, 10, 10);
        assert_eq!(group_rectangles(&[a, b], 0).len(), 2);
        let c = Rect::new(1, 0, 10, 10);
        assert_eq!(group_rectangles(&[a, c], 0).len(), 1);
    }

    #[test]
    fn vacuous_cascade_hits_every_window() {
        let frame = Frame::filled(0, 0, 26, 25, [10, 10, 10]);
        let mut params = DetectParams::faces(25);
        params.min_neighbors = 0;
        let dets = detect(&single_stage(-1e30), &frame, &params);
        // all 3x2 base-size windows are similar and form one group
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].neighbor_count, 6);
        assert_eq!(dets[0].bbox, Rect::new(1, 1, 24, 24));
    }
}
