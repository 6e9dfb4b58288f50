//! Top-down SVG plots of a map, optionally over the simulated ground truth.
//!
//! Output depends only on the inputs: coordinates are printed with fixed
//! precision and elements are emitted in input order.

use std::fmt::Write;

use crate::geometry::Point2;
use crate::map::{FeatureKind, PriorMap};
use crate::sim::WorldTimeline;

const MARGIN: f64 = 20.0;
const TICK: f64 = 50.0;

#[derive(Debug, Clone, Copy)]
struct Frame {
    min: Point2,
    max: Point2,
}

impl Frame {
    fn around(points: impl IntoIterator<Item = Point2>) -> Self {
        let mut it = points.into_iter().filter(|p| p.is_finite()).peekable();
        if it.peek().is_none() {
            return Self {
                min: Point2::new(-MARGIN, -MARGIN),
                max: Point2::new(MARGIN, MARGIN),
            };
        }
        let (mut min, mut max) = (Point2::new(f64::MAX, f64::MAX), Point2::new(f64::MIN, f64::MIN));
        for p in it {
            min = Point2::new(min.x.min(p.x), min.y.min(p.y));
            max = Point2::new(max.x.max(p.x), max.y.max(p.y));
        }
        Self {
            min: Point2::new(min.x - MARGIN, min.y - MARGIN),
            max: Point2::new(max.x + MARGIN, max.y + MARGIN),
        }
    }

    fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// SVG user coordinates: meters, y pointing down.
    fn map(&self, p: Point2) -> (f64, f64) {
        (p.x - self.min.x, self.max.y - p.y)
    }
}

fn ticks(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let first = (lo / TICK).ceil() as i64;
    let last = (hi / TICK).floor() as i64;
    (first..=last).map(|k| k as f64 * TICK)
}

/// Renders `map` as it stood after `week`. With a world, ground-truth
/// features alive that week are drawn underneath, and features that died or
/// appeared by then are ringed. `trajectory` is drawn as a polyline.
pub fn render_svg(map: &PriorMap, week: u32, world: Option<&WorldTimeline>, trajectory: &[Point2]) -> String {
    let mut extent: Vec<Point2> = map.features.iter().map(|f| f.position).collect();
    extent.extend_from_slice(trajectory);
    if let Some(w) = world {
        extent.extend(w.features.iter().map(|f| f.position));
    }
    let frame = Frame::around(extent);
    let (w, h) = (frame.width(), frame.height());

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.2} {h:.2}" width="{:.0}" height="{:.0}">"#,
        w * 2.0,
        h * 2.0
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w:.2}" height="{h:.2}" fill="white" stroke="black" stroke-width="0.5"/>"#);

    svg.push_str(r##"<g stroke="#dddddd" stroke-width="0.3" font-size="6" fill="#666666">"##);
    svg.push('\n');
    for x in ticks(frame.min.x, frame.max.x) {
        let (sx, _) = frame.map(Point2::new(x, 0.0));
        let _ = writeln!(svg, r#"<line x1="{sx:.2}" y1="0" x2="{sx:.2}" y2="{h:.2}"/><text x="{:.2}" y="{:.2}" stroke="none">{x:.0}</text>"#, sx + 1.0, h - 2.0);
    }
    for y in ticks(frame.min.y, frame.max.y) {
        let (_, sy) = frame.map(Point2::new(0.0, y));
        let _ = writeln!(svg, r#"<line x1="0" y1="{sy:.2}" x2="{w:.2}" y2="{sy:.2}"/><text x="1" y="{:.2}" stroke="none">{y:.0}</text>"#, sy - 1.0);
    }
    svg.push_str("</g>\n");

    if let Some(world) = world {
        svg.push_str(r##"<g fill="none" stroke="#999999" stroke-width="0.4">"##);
        svg.push('\n');
        for f in world.features.iter().filter(|f| f.alive(week)) {
            let (x, y) = frame.map(f.position);
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.2"/>"#);
        }
        svg.push_str("</g>\n");

        svg.push_str(r#"<g fill="none" stroke-width="0.6">"#);
        svg.push('\n');
        for f in &world.features {
            let colour = if f.death_week <= week {
                "#d62728"
            } else if f.birth_week > 0 && f.birth_week <= week {
                "#2ca02c"
            } else {
                continue;
            };
            let (x, y) = frame.map(f.position);
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" stroke="{colour}"/>"#);
        }
        svg.push_str("</g>\n");
    }

    if trajectory.len() > 1 {
        svg.push_str(r#"<polyline fill="none" stroke="black" stroke-width="0.3" points=""#);
        for (i, p) in trajectory.iter().enumerate() {
            let (x, y) = frame.map(*p);
            let _ = write!(svg, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
        }
        svg.push_str("\"/>\n");
    }

    svg.push_str("<g stroke=\"none\">\n");
    for f in &map.features {
        let (x, y) = frame.map(f.position);
        match f.kind {
            FeatureKind::Pole => {
                let _ = writeln!(svg, r##"<circle cx="{x:.2}" cy="{y:.2}" r="0.8" fill="#1f77b4"/>"##);
            }
            FeatureKind::Corner => {
                let _ = writeln!(
                    svg,
                    r##"<rect x="{:.2}" y="{:.2}" width="1.6" height="1.6" fill="#ff7f0e"/>"##,
                    x - 0.8,
                    y - 0.8
                );
            }
        }
    }
    svg.push_str("</g>\n");

    let _ = writeln!(
        svg,
        r#"<text x="4" y="10" font-size="8">week {week}, map version {}, {} features</text>"#,
        map.version,
        map.len()
    );
    svg.push_str("</svg>\n");
    svg
}
