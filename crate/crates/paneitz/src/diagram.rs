//! Bifurcation-diagram rendering: parameter on the horizontal axis, central
//! value u(0) on the vertical, the constant solution as a baseline with the
//! continued branches drawn over it and the degeneration instants marked.
//!
//! Output is a single self-contained SVG string: no external assets, no
//! timestamps, and all coordinates formatted to fixed precision, so the same
//! data always renders to the same bytes.

/// One curve to draw, sampled as (s, u(0)) pairs.
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct DiagramOpts {
    pub width: u32,
    pub height: u32,
    pub title: String,
}

impl Default for DiagramOpts {
    fn default() -> Self {
        Self {
            width: 860,
            height: 560,
            title: "branches of positive solutions".into(),
        }
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 46.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    px_w: f64,
    px_h: f64,
}

impl Frame {
    fn x(&self, s: f64) -> f64 {
        MARGIN_L + (s - self.x0) / (self.x1 - self.x0) * self.px_w
    }

    // SVG y grows downward.
    fn y(&self, a: f64) -> f64 {
        MARGIN_T + (self.y1 - a) / (self.y1 - self.y0) * self.px_h
    }
}

fn pad_span(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.06 * span, hi + 0.06 * span)
    } else {
        // Degenerate extent (single point, or no data at all).
        let pad = 0.5 + 0.1 * lo.abs();
        (lo - pad, hi + pad)
    }
}

/// Render markers (the bifurcation instants, at u(0) = 1) and branch curves
/// into a standalone SVG document.
pub fn render(markers: &[f64], curves: &[Curve], opts: &DiagramOpts) -> String {
    let mut s_lo = f64::INFINITY;
    let mut s_hi = f64::NEG_INFINITY;
    let mut a_lo = 1.0f64;
    let mut a_hi = 1.0f64;
    for &m in markers {
        s_lo = s_lo.min(m);
        s_hi = s_hi.max(m);
    }
    for c in curves {
        for &(s, a) in &c.samples {
            s_lo = s_lo.min(s);
            s_hi = s_hi.max(s);
            a_lo = a_lo.min(a);
            a_hi = a_hi.max(a);
        }
    }
    if !s_lo.is_finite() {
        (s_lo, s_hi) = (0.0, 1.0);
    }
    let (x0, x1) = pad_span(s_lo, s_hi);
    let (y0, y1) = pad_span(a_lo, a_hi);
    let frame = Frame {
        x0,
        x1,
        y0,
        y1,
        px_w: f64::from(opts.width) - MARGIN_L - MARGIN_R,
        px_h: f64::from(opts.height) - MARGIN_T - MARGIN_B,
    };

    let mut out = String::with_capacity(4096);
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n",
        w = opts.width,
        h = opts.height
    ));
    out.push_str(&format!(
        "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        opts.width, opts.height
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" \
         text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + frame.px_w / 2.0,
        esc(&opts.title)
    ));

    // Plot frame and ticks.
    out.push_str(&format!(
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        MARGIN_L, MARGIN_T, frame.px_w, frame.px_h
    ));
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let sv = x0 + f * (x1 - x0);
        let px = frame.x(sv);
        out.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" \
             stroke=\"#333333\" stroke-width=\"1\"/>\n",
            MARGIN_T + frame.px_h,
            MARGIN_T + frame.px_h + 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{sv:.4}</text>\n",
            MARGIN_T + frame.px_h + 19.0
        ));
        let av = y0 + f * (y1 - y0);
        let py = frame.y(av);
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" \
             stroke=\"#333333\" stroke-width=\"1\"/>\n",
            MARGIN_L - 5.0,
            MARGIN_L
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{av:.4}</text>\n",
            MARGIN_L - 9.0,
            py + 4.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">s</text>\n",
        MARGIN_L + frame.px_w / 2.0,
        MARGIN_T + frame.px_h + 38.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.2})\">u(0)</text>\n",
        MARGIN_T + frame.px_h / 2.0
    ));

    // Constant branch u ≡ 1.
    let ty = frame.y(1.0);
    out.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{ty:.2}\" x2=\"{:.2}\" y2=\"{ty:.2}\" \
         stroke=\"#555555\" stroke-width=\"1.5\" stroke-dasharray=\"7 4\" \
         class=\"trivial\"/>\n",
        MARGIN_L,
        MARGIN_L + frame.px_w
    ));

    for (k, c) in curves.iter().enumerate() {
        if c.samples.is_empty() {
            continue;
        }
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::with_capacity(c.samples.len() * 16);
        for &(s, a) in &c.samples {
            pts.push_str(&format!("{:.2},{:.2} ", frame.x(s), frame.y(a)));
        }
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
             stroke-width=\"1.8\" class=\"branch\"/>\n",
            pts.trim_end()
        ));
        // Legend entry, stacked top-left inside the frame.
        let ly = MARGIN_T + 18.0 + 17.0 * k as f64;
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
             stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            MARGIN_L + 10.0,
            MARGIN_L + 34.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" \
             font-size=\"12\">{}</text>\n",
            MARGIN_L + 40.0,
            ly + 4.0,
            esc(&c.label)
        ));
    }

    for &m in markers {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#000000\" \
             class=\"instant\"/>\n",
            frame.x(m),
            frame.y(1.0)
        ));
    }

    out.push_str("</svg>\n");
    out
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_curves() -> Vec<Curve> {
        vec![
            Curve {
                label: "2 critical points".into(),
                samples: (0..40)
                    .map(|i| {
                        let x = f64::from(i) / 39.0;
                        (9.8 + 3.0 * x * x, 1.0 + 0.9 * x)
                    })
                    .collect(),
            },
            Curve {
                label: "3 critical points".into(),
                samples: (0..25)
                    .map(|i| {
                        let x = f64::from(i) / 24.0;
                        (26.6 + 2.0 * x * x, 1.0 + 0.5 * x)
                    })
                    .collect(),
            },
        ]
    }

    #[test]
    fn renders_each_element_kind_once_per_datum() {
        let svg = render(&[9.8, 26.6], &sample_curves(), &DiagramOpts::default());
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("class=\"branch\"").count(), 2);
        assert_eq!(svg.matches("class=\"instant\"").count(), 2);
        assert_eq!(svg.matches("class=\"trivial\"").count(), 1);
        assert!(svg.contains("2 critical points"));
    }

    #[test]
    fn identical_data_renders_identical_bytes() {
        let opts = DiagramOpts::default();
        let a = render(&[9.8], &sample_curves(), &opts);
        let b = render(&[9.8], &sample_curves(), &opts);
        assert_eq!(a, b);
    }

    #[test]
    fn horizontal_axis_is_the_parameter() {
        // Two instants at increasing s must map to increasing x.
        let svg = render(&[10.0, 20.0], &[], &DiagramOpts::default());
        let cx: Vec<f64> = svg
            .lines()
            .filter(|l| l.contains("class=\"instant\""))
            .map(|l| {
                let i = l.find("cx=\"").unwrap() + 4;
                let j = l[i..].find('"').unwrap();
                l[i..i + j].parse().unwrap()
            })
            .collect();
        assert_eq!(cx.len(), 2);
        assert!(cx[1] > cx[0]);
    }

    #[test]
    fn empty_input_still_renders_a_frame() {
        let svg = render(&[], &[], &DiagramOpts::default());
        assert!(svg.contains("<rect"));
        assert_eq!(svg.matches("class=\"branch\"").count(), 0);
    }
}
