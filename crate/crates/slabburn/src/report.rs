//! CSV tables and SVG plots.
//!
//! Both formats are plain text with deterministic formatting, so rerunning
//! a pipeline with the same seed produces byte-identical report files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{FoldReport, StudyResults};
use crate::rate::{cubic_value, HeightSeries, RateResult};

/// How a series is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Line,
    Points,
    /// Points with vertical error bars.
    ErrorBars,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub style: SeriesStyle,
    pub points: Vec<(f64, f64)>,
    /// `(low, high)` per point; only read for [`SeriesStyle::ErrorBars`].
    pub bars: Vec<(f64, f64)>,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            style: SeriesStyle::Line,
            points,
            bars: Vec::new(),
        }
    }

    pub fn points(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            style: SeriesStyle::Points,
            points,
            bars: Vec::new(),
        }
    }

    pub fn error_bars(
        name: impl Into<String>,
        points: Vec<(f64, f64)>,
        bars: Vec<(f64, f64)>,
    ) -> Self {
        Self {
            name: name.into(),
            style: SeriesStyle::ErrorBars,
            points,
            bars,
        }
    }
}

/// A minimal line/scatter plot rendered to standalone SVG.
#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    fn y_value(&self, y: f64) -> f64 {
        if self.log_y {
            y.max(1e-12).log10()
        } else {
            y
        }
    }

    /// Renders the plot; errors when no series has any point.
    pub fn to_svg(&self) -> Result<String> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(self.y_value(y));
            }
            if s.style == SeriesStyle::ErrorBars {
                for &(lo, hi) in &s.bars {
                    ys.push(self.y_value(lo));
                    ys.push(self.y_value(hi));
                }
            }
        }
        if xs.is_empty() {
            return Err(Error::EmptyResults);
        }
        let (x_min, x_max) = span(&xs);
        let (y_min, y_max) = span(&ys);
        let sx = (W - MARGIN_L - MARGIN_R) / (x_max - x_min);
        let sy = (H - MARGIN_T - MARGIN_B) / (y_max - y_min);
        let px = |x: f64| MARGIN_L + (x - x_min) * sx;
        let py = |y: f64| H - MARGIN_B - (self.y_value(y) - y_min) * sy;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
            W / 2.0,
            xml_escape(&self.title)
        );

        // Axes.
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN_L}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
            H - MARGIN_B,
            W - MARGIN_R,
            H - MARGIN_B
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{:.1}" stroke="black"/>"#,
            H - MARGIN_B
        );
        for i in 0..=4 {
            let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
            let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                px(fx),
                H - MARGIN_B + 16.0,
                fmt_tick(fx)
            );
            let y_tick_label = if self.log_y {
                format!("1e{}", fmt_tick(fy))
            } else {
                fmt_tick(fy)
            };
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                MARGIN_L - 6.0,
                H - MARGIN_B - (fy - y_min) * sy + 4.0,
                y_tick_label
            );
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_L}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
                H - MARGIN_B - (fy - y_min) * sy,
                W - MARGIN_R,
                H - MARGIN_B - (fy - y_min) * sy
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            (MARGIN_L + W - MARGIN_R) / 2.0,
            H - 10.0,
            xml_escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            xml_escape(&self.y_label)
        );

        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            match s.style {
                SeriesStyle::Line => {
                    let path: Vec<String> = s
                        .points
                        .iter()
                        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                        .collect();
                    let _ = writeln!(
                        svg,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        path.join(" ")
                    );
                }
                SeriesStyle::Points => {
                    for &(x, y) in &s.points {
                        let _ = writeln!(
                            svg,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                            px(x),
                            py(y)
                        );
                    }
                }
                SeriesStyle::ErrorBars => {
                    for (&(x, y), &(lo, hi)) in s.points.iter().zip(&s.bars) {
                        let _ = writeln!(
                            svg,
                            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{color}"/>"#,
                            px(x),
                            py(lo),
                            py(hi)
                        );
                        for v in [lo, hi] {
                            let _ = writeln!(
                                svg,
                                r#"<line x1="{:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="{color}"/>"#,
                                px(x) - 4.0,
                                py(v),
                                px(x) + 4.0
                            );
                        }
                        let _ = writeln!(
                            svg,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                            px(x),
                            py(y)
                        );
                    }
                }
            }
            // Legend entry.
            let ly = MARGIN_T + 16.0 * si as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/>"#,
                W - MARGIN_R + 10.0,
                ly
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
                W - MARGIN_R + 24.0,
                ly + 9.0,
                xml_escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_svg()?)?;
        Ok(())
    }
}

fn span(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 100.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A CSV table with a documented header row.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Self {
            text: format!("{header}\n"),
            columns: header.split(',').count(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }

    pub fn write(self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.finish())?;
        Ok(())
    }
}

/// Formats a float with shortest round-trip representation, so values can
/// be parsed back exactly.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes `heights.csv` for one flux: per frame, per column heights.
pub fn write_heights_csv(
    path: impl AsRef<Path>,
    flux_label: &str,
    labels: &[String],
    series: &HeightSeries,
) -> Result<()> {
    let mut csv = Csv::new("flux_label,label,time_s,column,height_px,valid");
    let (frames, cols) = series.heights_px.dim();
    for f in 0..frames {
        for c in 0..cols {
            csv.row(&[
                flux_label.into(),
                labels[f].clone(),
                num(series.times_s[f]),
                c.to_string(),
                num(series.heights_px[[f, c]]),
                u8::from(series.valid[[f, c]]).to_string(),
            ]);
        }
    }
    csv.write(path)
}

/// Writes `rate.csv` rows for a set of flux rate results.
pub fn write_rate_csv(
    path: impl AsRef<Path>,
    rows: &[(String, RateResult)],
) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut csv = Csv::new("flux_label,a0,a1,a2,a3,rate_mm_s,rate_lower,rate_upper");
    for (flux, r) in rows {
        csv.row(&[
            flux.clone(),
            num(r.cubic_coeffs[0]),
            num(r.cubic_coeffs[1]),
            num(r.cubic_coeffs[2]),
            num(r.cubic_coeffs[3]),
            num(r.rate_mm_s),
            num(r.rate_lower),
            num(r.rate_upper),
        ]);
    }
    csv.write(path)
}

/// Height-versus-time scatter with the fitted cubic.
pub fn height_fit_plot(
    flux_label: &str,
    times: &[f64],
    mean_heights: &[f64],
    result: &RateResult,
) -> Plot {
    let fit: Vec<(f64, f64)> = (0..=100)
        .map(|i| {
            let t = times[0] + (times[times.len() - 1] - times[0]) * i as f64 / 100.0;
            (t, cubic_value(&result.cubic_coeffs, t))
        })
        .collect();
    Plot::new(
        format!("Fuel height, flux {flux_label}"),
        "time [s]",
        "mean height [px]",
    )
    .with(Series::points(
        "measured",
        times.iter().copied().zip(mean_heights.iter().copied()).collect(),
    ))
    .with(Series::line("cubic fit", fit))
}

/// Writes the LOOCV accuracy table and accuracy-versus-time plot.
pub fn write_loocv_report(dir: impl AsRef<Path>, folds: &[FoldReport]) -> Result<()> {
    if folds.is_empty() || folds.iter().all(|f| f.frames.is_empty()) {
        return Err(Error::EmptyResults);
    }
    let dir = dir.as_ref();
    let mut csv = Csv::new("test_flux,label,time_s,accuracy,spatial_error,profile_uncertainty");
    let mut plot = Plot::new("Held-out accuracy over burn time", "time [s]", "accuracy");
    for fold in folds {
        for fe in &fold.frames {
            csv.row(&[
                fold.spec.test_flux.clone(),
                fe.label.clone(),
                num(fe.time_s),
                num(fe.accuracy),
                num(fe.spatial_error),
                num(fe.profile_uncertainty),
            ]);
        }
        plot = plot.with(Series::line(
            format!("test {}", fold.spec.test_flux),
            fold.frames.iter().map(|f| (f.time_s, f.accuracy)).collect(),
        ));
    }
    csv.write(dir.join("loocv.csv"))?;
    plot.write(dir.join("loocv_accuracy.svg"))?;
    Ok(())
}

/// Writes study tables: per-frame spatial errors and per-cell rates, plus
/// spatial-error and rate plots.
pub fn write_study_report(
    dir: impl AsRef<Path>,
    study: &StudyResults,
    flux_values: &std::collections::BTreeMap<String, f64>,
    truth_rates: &std::collections::BTreeMap<String, f64>,
) -> Result<()> {
    if study.cells.is_empty() {
        return Err(Error::EmptyResults);
    }
    let dir = dir.as_ref();
    let mode = match study.mode {
        crate::eval::ColorMode::Rgb => "rgb",
        crate::eval::ColorMode::Grayscale => "grayscale",
    };
    let mut frames_csv = Csv::new(
        "mode,train,test_flux,label,time_s,accuracy,spatial_error,profile_uncertainty",
    );
    let mut rates_csv = Csv::new("mode,train,test_flux,rate_mm_s,rate_lower,rate_upper,rate_err");
    for cell in &study.cells {
        for fe in &cell.frames {
            frames_csv.row(&[
                mode.into(),
                cell.train_label.clone(),
                cell.test_flux.clone(),
                fe.label.clone(),
                num(fe.time_s),
                num(fe.accuracy),
                num(fe.spatial_error),
                num(fe.profile_uncertainty),
            ]);
        }
        let (r, lo, hi) = match &cell.rate {
            Some(r) => (num(r.rate_mm_s), num(r.rate_lower), num(r.rate_upper)),
            None => ("".into(), "".into(), "".into()),
        };
        rates_csv.row(&[
            mode.into(),
            cell.train_label.clone(),
            cell.test_flux.clone(),
            r,
            lo,
            hi,
            cell.rate_err.map(num).unwrap_or_default(),
        ]);
    }
    frames_csv.write(dir.join(format!("study_{mode}_frames.csv")))?;
    rates_csv.write(dir.join(format!("study_{mode}_rates.csv")))?;

    // Spatial error over time, one plot per trained model.
    let train_labels: Vec<String> = {
        let mut seen = Vec::new();
        for c in &study.cells {
            if !seen.contains(&c.train_label) {
                seen.push(c.train_label.clone());
            }
        }
        seen
    };
    for train in &train_labels {
        let mut plot = Plot::new(
            format!("Spatial error, model {train} ({mode})"),
            "time [s]",
            "log10 spatial error",
        )
        .log_y();
        for cell in study.cells.iter().filter(|c| &c.train_label == train) {
            plot = plot.with(Series::line(
                format!("test {}", cell.test_flux),
                cell.frames
                    .iter()
                    .map(|f| (f.time_s, f.spatial_error.max(1e-9)))
                    .collect(),
            ));
        }
        plot.write(dir.join(format!("study_{mode}_spatial_{train}.svg")))?;
    }

    // Rate versus flux with error bars, one series per model, plus truth.
    let mut rate_plot = Plot::new(
        format!("Regression rate versus flux ({mode})"),
        "oxidizer flux [kg/m^2-s]",
        "rate [mm/s]",
    );
    let truth_points: Vec<(f64, f64)> = truth_rates
        .iter()
        .filter_map(|(label, &rate)| flux_values.get(label).map(|&g| (g, rate)))
        .collect();
    rate_plot = rate_plot.with(Series::points("programmed", truth_points));
    for train in &train_labels {
        let mut points = Vec::new();
        let mut bars = Vec::new();
        for cell in study.cells.iter().filter(|c| &c.train_label == train) {
            if let (Some(r), Some(&g)) = (&cell.rate, flux_values.get(&cell.test_flux)) {
                points.push((g, r.rate_mm_s));
                bars.push((r.rate_lower, r.rate_upper));
            }
        }
        rate_plot = rate_plot.with(Series::error_bars(format!("model {train}"), points, bars));
    }
    rate_plot.write(dir.join(format!("study_{mode}_rates.svg")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_plot_renders_all_series_kinds() {
        let plot = Plot::new("t", "x", "y")
            .with(Series::line("l", vec![(0.0, 1.0), (1.0, 2.0)]))
            .with(Series::points("p", vec![(0.5, 1.5)]))
            .with(Series::error_bars(
                "e",
                vec![(0.7, 1.2)],
                vec![(1.0, 1.4)],
            ));
        let svg = plot.to_svg().unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("circle"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn empty_plot_is_an_error() {
        assert!(matches!(
            Plot::new("t", "x", "y").to_svg(),
            Err(Error::EmptyResults)
        ));
    }

    #[test]
    fn log_plot_handles_small_values() {
        let plot = Plot::new("t", "x", "y")
            .log_y()
            .with(Series::line("l", vec![(0.0, 1e-4), (1.0, 1.0)]));
        assert!(plot.to_svg().is_ok());
    }

    #[test]
    fn csv_shapes_are_stable() {
        let mut csv = Csv::new("a,b");
        csv.row(&["1".into(), "2".into()]);
        assert_eq!(csv.finish(), "a,b\n1,2\n");
    }

    #[test]
    fn empty_rate_rows_error_without_writing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rate.csv");
        assert!(write_rate_csv(&path, &[]).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn num_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-9, 12345.6789] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
