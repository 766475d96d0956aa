//! Ambulance marking recognition on grey-scale frames.
//!
//! The pipeline is median denoising, contrast stretch, Sobel edge
//! extraction and chamfer matching of a point pattern against the edge
//! map. Matching scores a translation by the sum, over pattern points, of
//! the city-block distance to the nearest edge point; every translation
//! that keeps the pattern inside the frame is evaluated and the minimum
//! wins. A city-block distance field makes each evaluation `n` lookups.

mod pgm;
pub mod synth;

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pgm::{read_pgm, write_pgm};

pub const DEFAULT_SOBEL_THRESHOLD: u32 = 128;
pub const DEFAULT_TAU_PER_POINT: f64 = 2.0;
/// Pattern size giving the clearest separation in the original study.
pub const DEFAULT_PATTERN_SIZE: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecognitionError {
    #[error("image must be at least 3x3, got {width}x{height}")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BadPixelCount { expected: usize, got: usize },
    #[error("edge map is empty")]
    EmptyEdgeMap,
    #[error("pattern is empty")]
    EmptyPattern,
    #[error("pattern {pattern_w}x{pattern_h} does not fit a {width}x{height} frame")]
    PatternTooLarge {
        pattern_w: u32,
        pattern_h: u32,
        width: u32,
        height: u32,
    },
    #[error("point ({x}, {y}) outside {width}x{height} map")]
    PointOutOfBounds {
        x: i32,
        y: i32,
        width: u32,
        height: u32,
    },
    #[error("no edges found; frame is not recognizable")]
    NotRecognizable,
    #[error("PGM: {0}")]
    Pgm(String),
}

/// Integer pixel coordinate or translation. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

impl From<[i32; 2]> for Point {
    fn from([x, y]: [i32; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [i32; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// City-block (L1) distance.
pub fn city_block(p: Point, q: Point) -> u32 {
    p.x.abs_diff(q.x) + p.y.abs_diff(q.y)
}

/// 8-bit grey-scale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RecognitionError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(RecognitionError::BadPixelCount {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = v;
    }
}

/// Set of edge pixels within a `width` x `height` frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: u32,
    height: u32,
    /// Sorted by (y, x), no duplicates.
    points: Vec<Point>,
}

impl EdgeMap {
    pub fn new(
        width: u32,
        height: u32,
        points: impl IntoIterator<Item = Point>,
    ) -> Result<Self, RecognitionError> {
        let mut points: Vec<Point> = points.into_iter().collect();
        if let Some(p) = points
            .iter()
            .find(|p| p.x < 0 || p.y < 0 || p.x as u32 >= width || p.y as u32 >= height)
        {
            return Err(RecognitionError::PointOutOfBounds {
                x: p.x,
                y: p.y,
                width,
                height,
            });
        }
        points.sort_by_key(|p| (p.y, p.x));
        points.dedup();
        Ok(Self {
            width,
            height,
            points,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.points
            .binary_search_by_key(&(p.y, p.x), |q| (q.y, q.x))
            .is_ok()
    }
}

/// Point pattern anchored so that its minimum x and y are both zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PatternDoc", into = "PatternDoc")]
pub struct Pattern {
    points: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
struct PatternDoc {
    points: Vec<Point>,
}

impl TryFrom<PatternDoc> for Pattern {
    type Error = RecognitionError;
    fn try_from(doc: PatternDoc) -> Result<Self, Self::Error> {
        Pattern::new(doc.points)
    }
}

impl From<Pattern> for PatternDoc {
    fn from(p: Pattern) -> Self {
        PatternDoc { points: p.points }
    }
}

impl Pattern {
    /// Deduplicates the points and shifts them to the origin.
    pub fn new(points: impl IntoIterator<Item = Point>) -> Result<Self, RecognitionError> {
        let mut points: Vec<Point> = points.into_iter().collect();
        let min_x = points
            .iter()
            .map(|p| p.x)
            .min()
            .ok_or(RecognitionError::EmptyPattern)?;
        let min_y = points
            .iter()
            .map(|p| p.y)
            .min()
            .ok_or(RecognitionError::EmptyPattern)?;
        for p in &mut points {
            p.x -= min_x;
            p.y -= min_y;
        }
        points.sort_by_key(|p| (p.y, p.x));
        points.dedup();
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Bounding-box width and height.
    pub fn extent(&self) -> (u32, u32) {
        let w = self.points.iter().map(|p| p.x).max().unwrap_or(0) + 1;
        let h = self.points.iter().map(|p| p.y).max().unwrap_or(0) + 1;
        (w as u32, h as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    #[serde(rename = "translation")]
    pub best_translation: Point,
    #[serde(rename = "D")]
    pub dissimilarity: u64,
    /// Pattern size `n`.
    pub n: usize,
    pub per_point: f64,
    pub is_ambulance: bool,
}

/// City-block distance from every cell to the nearest edge point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: u32,
    height: u32,
    values: Vec<u32>,
}

impl DistanceField {
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }
}

/// 3x3 median filter. Border pixels take the median of their in-bounds
/// neighbourhood (upper median for even counts).
pub fn denoise(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width as i64, img.height as i64);
    let mut out = img.clone();
    let mut window = Vec::with_capacity(9);
    for y in 0..h {
        for x in 0..w {
            window.clear();
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        window.push(img.pixels[(ny * w + nx) as usize]);
                    }
                }
            }
            window.sort_unstable();
            out.pixels[(y * w + x) as usize] = window[window.len() / 2];
        }
    }
    out
}

/// Linear contrast stretch of `[min, max]` onto `[0, 255]`, rounding half
/// up. A constant image is returned unchanged.
pub fn normalize(img: &GrayImage) -> GrayImage {
    let min = img.pixels.iter().copied().min().unwrap_or(0) as u32;
    let max = img.pixels.iter().copied().max().unwrap_or(0) as u32;
    if max == min {
        return img.clone();
    }
    let range = max - min;
    let pixels = img
        .pixels
        .iter()
        .map(|&p| (((p as u32 - min) * 255 * 2 + range) / (2 * range)) as u8)
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Sobel gradient magnitude `|Gx| + |Gy|`, thresholded. The outermost
/// pixel ring is never an edge.
pub fn sobel_edges(img: &GrayImage, threshold: u32) -> Result<EdgeMap, RecognitionError> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(RecognitionError::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let px = |x: u32, y: u32| img.get(x, y) as i32;
    let mut points = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2 * px(x - 1, y)
                - px(x - 1, y + 1);
            let gy = px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2 * px(x, y - 1)
                - px(x + 1, y - 1);
            if gx.unsigned_abs() + gy.unsigned_abs() >= threshold {
                points.push(Point::new(x as i32, y as i32));
            }
        }
    }
    // already in (y, x) order
    Ok(EdgeMap {
        width: w,
        height: h,
        points,
    })
}

/// Sum over pattern points of the distance to the nearest edge point,
/// with the pattern shifted by `t`. Evaluated directly, without a
/// distance field.
pub fn dissimilarity(
    pattern: &Pattern,
    edges: &EdgeMap,
    t: Point,
) -> Result<u64, RecognitionError> {
    if edges.is_empty() {
        return Err(RecognitionError::EmptyEdgeMap);
    }
    Ok(pattern
        .points
        .iter()
        .map(|&p| {
            let q = p + t;
            edges
                .points
                .iter()
                .map(|&e| city_block(q, e) as u64)
                .min()
                .unwrap_or(0)
        })
        .sum())
}

/// Two-pass sequential city-block distance transform of the edge map.
pub fn distance_field(edges: &EdgeMap) -> Result<DistanceField, RecognitionError> {
    if edges.is_empty() {
        return Err(RecognitionError::EmptyEdgeMap);
    }
    let (w, h) = (edges.width as usize, edges.height as usize);
    // larger than any in-frame distance, small enough not to overflow
    let far = (w + h) as u32;
    let mut d = vec![far; w * h];
    for p in &edges.points {
        d[p.y as usize * w + p.x as usize] = 0;
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x > 0 {
                d[i] = d[i].min(d[i - 1] + 1);
            }
            if y > 0 {
                d[i] = d[i].min(d[i - w] + 1);
            }
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            if x + 1 < w {
                d[i] = d[i].min(d[i + 1] + 1);
            }
            if y + 1 < h {
                d[i] = d[i].min(d[i + w] + 1);
            }
        }
    }
    Ok(DistanceField {
        width: edges.width,
        height: edges.height,
        values: d,
    })
}

/// Exhaustive search over every translation keeping the pattern inside
/// the frame. Ties go to the smallest y, then the smallest x.
///
/// `is_ambulance` is decided with [`DEFAULT_TAU_PER_POINT`]; use
/// [`classify`] for another threshold.
pub fn match_pattern(pattern: &Pattern, edges: &EdgeMap) -> Result<MatchResult, RecognitionError> {
    if pattern.is_empty() {
        return Err(RecognitionError::EmptyPattern);
    }
    let field = distance_field(edges)?;
    let (pw, ph) = pattern.extent();
    let (w, h) = (edges.width, edges.height);
    if pw > w || ph > h {
        return Err(RecognitionError::PatternTooLarge {
            pattern_w: pw,
            pattern_h: ph,
            width: w,
            height: h,
        });
    }
    let offsets: Vec<usize> = pattern
        .points
        .iter()
        .map(|p| p.y as usize * w as usize + p.x as usize)
        .collect();

    let mut best = (u64::MAX, Point::new(0, 0));
    for ty in 0..=(h - ph) {
        for tx in 0..=(w - pw) {
            let base = ty as usize * w as usize + tx as usize;
            let d: u64 = offsets.iter().map(|&o| field.values[base + o] as u64).sum();
            if d < best.0 {
                best = (d, Point::new(tx as i32, ty as i32));
            }
        }
    }
    let mut result = MatchResult {
        best_translation: best.1,
        dissimilarity: best.0,
        n: pattern.len(),
        per_point: best.0 as f64 / pattern.len() as f64,
        is_ambulance: false,
    };
    result.is_ambulance = classify(&result, DEFAULT_TAU_PER_POINT);
    Ok(result)
}

/// Ambulance iff the mean per-point dissimilarity is at most `tau_per_point`.
pub fn classify(result: &MatchResult, tau_per_point: f64) -> bool {
    result.dissimilarity as f64 <= tau_per_point * result.n as f64
}

/// Full pipeline: denoise, normalize, Sobel edges, match, classify.
pub fn recognize(
    img: &GrayImage,
    pattern: &Pattern,
    sobel_threshold: u32,
    tau_per_point: f64,
) -> Result<MatchResult, RecognitionError> {
    let edges = sobel_edges(&normalize(&denoise(img)), sobel_threshold)?;
    let mut result = match match_pattern(pattern, &edges) {
        Err(RecognitionError::EmptyEdgeMap) => return Err(RecognitionError::NotRecognizable),
        other => other?,
    };
    result.is_ambulance = classify(&result, tau_per_point);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> GrayImage {
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                px.push(f(x, y));
            }
        }
        GrayImage::new(w, h, px).unwrap()
    }

    fn pts(v: &[(i32, i32)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn median_examples() {
        let c = GrayImage::filled(5, 4, 77);
        assert_eq!(denoise(&c), c);

        let mut salt = GrayImage::filled(5, 5, 0);
        salt.set(2, 2, 255);
        assert_eq!(denoise(&salt), GrayImage::filled(5, 5, 0));
        let mut corner = GrayImage::filled(5, 5, 0);
        corner.set(0, 0, 255);
        assert_eq!(denoise(&corner), GrayImage::filled(5, 5, 0));

        // Interior 3x3 window of a checkerboard: 5 of the centre's colour,
        // 4 of the other, so the centre keeps its value.
        let board = img(6, 6, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        let out = denoise(&board);
        for y in 1..5 {
            for x in 1..5 {
                assert_eq!(out.get(x, y), board.get(x, y));
            }
        }
    }

    #[test]
    fn stretch_examples() {
        let g = GrayImage::new(3, 1, vec![50, 150, 100]).unwrap();
        assert_eq!(normalize(&g).pixels(), &[0, 255, 128]);
        let full = img(16, 16, |x, y| (x * 16 + y) as u8);
        assert_eq!(full.pixels().iter().min(), Some(&0));
        assert_eq!(full.pixels().iter().max(), Some(&255));
        assert_eq!(normalize(&full), full);
        let c = GrayImage::filled(4, 4, 77);
        assert_eq!(normalize(&c), c);
    }

    #[test]
    fn sobel_on_vertical_step() {
        let step = img(8, 6, |x, _| if x < 4 { 0 } else { 255 });
        let e = sobel_edges(&step, 1020).unwrap();
        // columns 3 and 4 see the full 255 * (1 + 2 + 1) response
        let expected: Vec<_> = (1..5)
            .flat_map(|y| [Point::new(3, y), Point::new(4, y)])
            .collect();
        assert_eq!(e.points(), &expected[..]);
        assert!(sobel_edges(&step, 1021).unwrap().is_empty());
        assert!(sobel_edges(&GrayImage::filled(8, 8, 40), 1)
            .unwrap()
            .is_empty());
        assert_eq!(
            sobel_edges(&GrayImage::filled(2, 8, 0), 1),
            Err(RecognitionError::ImageTooSmall {
                width: 2,
                height: 8
            })
        );
    }

    #[test]
    fn city_block_examples() {
        assert_eq!(city_block(Point::new(0, 0), Point::new(3, 4)), 7);
        assert_eq!(city_block(Point::new(5, 5), Point::new(5, 5)), 0);
        assert_eq!(city_block(Point::new(2, -1), Point::new(-1, 3)), 7);
    }

    #[test]
    fn dissimilarity_examples() {
        let e = EdgeMap::new(10, 10, pts(&[(1, 2)])).unwrap();
        let p = Pattern::new(pts(&[(0, 0)])).unwrap();
        assert_eq!(dissimilarity(&p, &e, Point::new(0, 0)), Ok(3));

        // (0,0)->(0,1)=1, (0,0)->(3,0)=3, (1,0)->(0,1)=2, (1,0)->(3,0)=2
        let e = EdgeMap::new(10, 10, pts(&[(0, 1), (3, 0)])).unwrap();
        let p = Pattern::new(pts(&[(0, 0), (1, 0)])).unwrap();
        assert_eq!(dissimilarity(&p, &e, Point::new(0, 0)), Ok(3));

        let e = EdgeMap::new(10, 10, pts(&[(4, 4), (5, 4), (6, 6)])).unwrap();
        let p = Pattern::new(pts(&[(0, 0), (1, 0)])).unwrap();
        assert_eq!(dissimilarity(&p, &e, Point::new(4, 4)), Ok(0));

        let empty = EdgeMap::new(10, 10, vec![]).unwrap();
        assert_eq!(
            dissimilarity(&p, &empty, Point::new(0, 0)),
            Err(RecognitionError::EmptyEdgeMap)
        );
    }

    #[test]
    fn field_single_point() {
        let e = EdgeMap::new(3, 3, pts(&[(0, 0)])).unwrap();
        let f = distance_field(&e).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(f.get(x, y), x + y);
            }
        }
        assert_eq!(
            distance_field(&EdgeMap::new(3, 3, vec![]).unwrap()),
            Err(RecognitionError::EmptyEdgeMap)
        );
    }

    #[test]
    fn pattern_normalizes_to_origin() {
        let p = Pattern::new(pts(&[(5, 7), (6, 9), (5, 7)])).unwrap();
        assert_eq!(p.points(), &pts(&[(0, 0), (1, 2)])[..]);
        assert_eq!(p.extent(), (2, 3));
        assert_eq!(Pattern::new(vec![]), Err(RecognitionError::EmptyPattern));
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"points":[[0,0],[1,2]]}"#);
        let back: Pattern = serde_json::from_str(r#"{"points":[[3,3],[4,5]]}"#).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn self_match_and_shift() {
        let p = Pattern::new(pts(&[(0, 0), (1, 0), (2, 1), (0, 3), (4, 4)])).unwrap();
        let stamp = |t: Point| EdgeMap::new(160, 120, p.points().iter().map(|&q| q + t)).unwrap();
        let r = match_pattern(&p, &stamp(Point::new(40, 30))).unwrap();
        assert_eq!(r.best_translation, Point::new(40, 30));
        assert_eq!(r.dissimilarity, 0);
        assert!(r.is_ambulance);
        let r2 = match_pattern(&p, &stamp(Point::new(45, 33))).unwrap();
        assert_eq!(r2.best_translation, Point::new(45, 33));
        assert_eq!(r2.dissimilarity, r.dissimilarity);
    }

    #[test]
    fn pattern_too_large() {
        let p = Pattern::new(pts(&[(0, 0), (10, 0)])).unwrap();
        let e = EdgeMap::new(10, 10, pts(&[(1, 1)])).unwrap();
        assert!(matches!(
            match_pattern(&p, &e),
            Err(RecognitionError::PatternTooLarge { .. })
        ));
    }

    #[test]
    fn classification_boundary() {
        let r = |d: u64, n: usize| MatchResult {
            best_translation: Point::new(0, 0),
            dissimilarity: d,
            n,
            per_point: d as f64 / n as f64,
            is_ambulance: false,
        };
        assert!(classify(&r(0, 50), 0.01));
        assert!(classify(&r(100, 50), 2.0));
        assert!(!classify(&r(101, 50), 2.0));
        assert!(!classify(&r(500, 50), 2.0));
    }

    #[test]
    fn blank_frame_is_not_recognizable() {
        let p = Pattern::new(pts(&[(0, 0), (1, 1)])).unwrap();
        assert_eq!(
            recognize(&GrayImage::filled(160, 120, 0), &p, 128, 2.0),
            Err(RecognitionError::NotRecognizable)
        );
    }

    fn edge_map() -> impl Strategy<Value = EdgeMap> {
        (4u32..24, 4u32..24).prop_flat_map(|(w, h)| {
            proptest::collection::vec((0..w as i32, 0..h as i32), 1..30).prop_map(move |v| {
                EdgeMap::new(w, h, v.into_iter().map(|(x, y)| Point::new(x, y))).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn city_block_is_a_metric(a in (-50i32..50, -50i32..50), b in (-50i32..50, -50i32..50), c in (-50i32..50, -50i32..50)) {
            let (a, b, c) = (Point::new(a.0, a.1), Point::new(b.0, b.1), Point::new(c.0, c.1));
            prop_assert_eq!(city_block(a, b), city_block(b, a));
            prop_assert_eq!(city_block(a, a), 0);
            prop_assert_eq!(city_block(a, b) == 0, a == b);
            prop_assert!(city_block(a, c) <= city_block(a, b) + city_block(b, c));
        }

        #[test]
        fn field_equals_naive_minimum(e in edge_map()) {
            let f = distance_field(&e).unwrap();
            for y in 0..e.height() {
                for x in 0..e.width() {
                    let q = Point::new(x as i32, y as i32);
                    let naive = e.points().iter().map(|&p| city_block(p, q)).min().unwrap();
                    prop_assert_eq!(f.get(x, y), naive);
                }
            }
        }

        #[test]
        fn zero_iff_contained(e in edge_map(), raw in proptest::collection::vec((0i32..4, 0i32..4), 1..6), t in (0i32..4, 0i32..4)) {
            let p = Pattern::new(raw.into_iter().map(|(x, y)| Point::new(x, y))).unwrap();
            let t = Point::new(t.0, t.1);
            let d = dissimilarity(&p, &e, t).unwrap();
            let inside = p.points().iter().all(|&q| e.contains(q + t));
            prop_assert_eq!(d == 0, inside);
        }

        #[test]
        fn extra_edges_never_increase_d(e in edge_map(), extra in proptest::collection::vec((0i32..4, 0i32..4), 0..10)) {
            let p = Pattern::new(vec![Point::new(0, 0), Point::new(2, 1), Point::new(1, 3)]).unwrap();
            let more = EdgeMap::new(
                e.width(),
                e.height(),
                e.points().iter().copied().chain(extra.into_iter().map(|(x, y)| Point::new(x, y))),
            ).unwrap();
            let t = Point::new(0, 0);
            prop_assert!(dissimilarity(&p, &more, t).unwrap() <= dissimilarity(&p, &e, t).unwrap());
        }

        #[test]
        fn filters_preserve_shape_and_stretch_is_idempotent(
            (w, h, pix) in (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(any::<u8>(), (w * h) as usize))
            })
        ) {
            let g = GrayImage::new(w, h, pix).unwrap();
            let d = denoise(&g);
            prop_assert_eq!((d.width(), d.height()), (w, h));
            let n = normalize(&g);
            prop_assert_eq!((n.width(), n.height()), (w, h));
            prop_assert_eq!(normalize(&n), n);
        }
    }
}
