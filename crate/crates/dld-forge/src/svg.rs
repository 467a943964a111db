//! Minimal native SVG plotting: polylines, markers and axes, no external
//! dependency. Output is deterministic for identical inputs.

/// A single x-y chart with linear axes.
pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    x_range: (f64, f64),
    y_range: (f64, f64),
    body: Vec<String>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            body: Vec::new(),
        }
    }

    /// Fit the axes to cover all given points with a small pad.
    pub fn fit(&mut self, points: impl IntoIterator<Item = (f64, f64)>) {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for (x, y) in points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if !x_min.is_finite() {
            return;
        }
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).abs().max(1e-12);
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        self.x_range = pad(x_min, x_max);
        self.y_range = pad(y_min, y_max);
    }

    fn sx(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN_L + (x - lo) / (hi - lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN_B - (y - lo) / (hi - lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: &str, stroke: f64) {
        if points.is_empty() {
            return;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y)))
            .collect();
        self.body.push(format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{stroke}\" points=\"{}\"/>",
            coords.join(" ")
        ));
    }

    pub fn circles(&mut self, points: &[(f64, f64)], color: &str, r: f64) {
        for &(x, y) in points {
            self.body.push(format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" fill=\"{color}\"/>",
                self.sx(x),
                self.sy(y)
            ));
        }
    }

    fn axes(&self) -> String {
        let mut out = String::new();
        let x0 = MARGIN_L;
        let x1 = WIDTH - MARGIN_R;
        let y0 = HEIGHT - MARGIN_B;
        let y1 = MARGIN_T;
        out.push_str(&format!(
            "<rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>",
            x1 - x0,
            y0 - y1
        ));
        for i in 0..=4 {
            let fx = self.x_range.0 + (self.x_range.1 - self.x_range.0) * i as f64 / 4.0;
            let fy = self.y_range.0 + (self.y_range.1 - self.y_range.0) * i as f64 / 4.0;
            let px = self.sx(fx);
            let py = self.sy(fy);
            out.push_str(&format!(
                "<line x1=\"{px:.2}\" y1=\"{y0:.1}\" x2=\"{px:.2}\" y2=\"{:.1}\" stroke=\"#444\"/>",
                y0 + 4.0
            ));
            out.push_str(&format!(
                "<text x=\"{px:.2}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
                y0 + 18.0,
                format_tick(fx)
            ));
            out.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{py:.2}\" x2=\"{x0:.1}\" y2=\"{py:.2}\" stroke=\"#444\"/>",
                x0 - 4.0
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
                x0 - 8.0,
                py + 4.0,
                format_tick(fy)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            WIDTH / 2.0,
            xml_escape(&self.title)
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 12.0,
            xml_escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            xml_escape(&self.y_label)
        ));
        out
    }

    pub fn render(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n{}\n{}\n</svg>\n",
            self.axes(),
            self.body.join("\n")
        )
    }
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_contains_structure() {
        let mut plot = Plot::new("d_c vs Re", "Re", "D_c (um)");
        let pts = vec![(0.01, 5.0), (1.0, 6.0), (10.0, 6.5)];
        plot.fit(pts.iter().copied());
        plot.polyline(&pts, "#1f77b4", 1.5);
        plot.circles(&pts, "#d62728", 2.0);
        let svg = plot.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("viewBox"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("<circle"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn identical_inputs_render_identically() {
        let build = || {
            let mut plot = Plot::new("t", "x", "y");
            plot.fit([(0.0, 0.0), (2.0, 4.0)]);
            plot.polyline(&[(0.0, 0.0), (1.0, 1.0), (2.0, 4.0)], "#000", 1.0);
            plot.render()
        };
        assert_eq!(build(), build());
    }
}
