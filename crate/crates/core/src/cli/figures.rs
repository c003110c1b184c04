//! Grouped-bar figure data and SVG emission for the plot command.
//!
//! The input is the per-condition CSV written by the eval command; the
//! output mirrors the reference figures: one panel per noise type, one
//! bar group per SNR, one bar per system. Everything is emitted as plain
//! text so repeated runs are byte-identical.

use std::collections::BTreeMap;

/// One parsed row of the conditions CSV. Only cells that held a value
/// appear in `values`, keyed by column name.
#[derive(Debug, Clone, PartialEq)]
pub struct CondRow {
    pub system: String,
    pub noise: String,
    pub snr_db: f64,
    pub values: BTreeMap<String, f64>,
}

/// Parse the `system,noise,snr_db,n,...` CSV back into rows. Column
/// order is taken from the header so the file remains the contract.
pub fn parse_conditions_csv(text: &str) -> Result<Vec<CondRow>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("conditions file is empty")?;
    let columns: Vec<&str> = header.split(',').collect();
    for required in ["system", "noise", "snr_db"] {
        if !columns.contains(&required) {
            return Err(format!("conditions header lacks a {required} column"));
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(format!("line {}: expected {} cells", lineno + 2, columns.len()));
        }
        let mut system = String::new();
        let mut noise = String::new();
        let mut snr_db = f64::NAN;
        let mut values = BTreeMap::new();
        for (name, cell) in columns.iter().zip(&cells) {
            match *name {
                "system" => system = cell.to_string(),
                "noise" => noise = cell.to_string(),
                "snr_db" => {
                    snr_db = cell
                        .parse()
                        .map_err(|_| format!("line {}: bad snr_db {cell:?}", lineno + 2))?;
                }
                "n" => {}
                _ => {
                    if !cell.is_empty() {
                        let v: f64 = cell.parse().map_err(|_| {
                            format!("line {}: bad {name} cell {cell:?}", lineno + 2)
                        })?;
                        values.insert(name.to_string(), v);
                    }
                }
            }
        }
        rows.push(CondRow { system, noise, snr_db, values });
    }
    Ok(rows)
}

/// Figure-ready data: panels by noise type, groups by SNR, one bar per
/// system in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub metric: String,
    pub systems: Vec<String>,
    pub panels: Vec<Panel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub noise: String,
    pub groups: Vec<Group>,
}

/// Bar values aligned with `FigureData::systems`; None leaves a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub snr_db: f64,
    pub values: Vec<Option<f64>>,
}

fn system_rank(system: &str) -> (usize, String) {
    match system {
        "noisy" => (0, system.to_string()),
        "enhanced" => (1, system.to_string()),
        other => (2, other.to_string()),
    }
}

/// Regroup condition rows around one metric column.
pub fn figure_data(rows: &[CondRow], metric: &str) -> FigureData {
    let mut systems: Vec<String> = rows.iter().map(|r| r.system.clone()).collect();
    systems.sort_by_key(|s| system_rank(s));
    systems.dedup();
    let mut noises: Vec<String> = rows.iter().map(|r| r.noise.clone()).collect();
    noises.sort();
    noises.dedup();
    let mut snrs: Vec<f64> = rows.iter().map(|r| r.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();

    let panels = noises
        .into_iter()
        .map(|noise| {
            let groups = snrs
                .iter()
                .map(|&snr_db| {
                    let values = systems
                        .iter()
                        .map(|system| {
                            rows.iter()
                                .find(|r| {
                                    r.system == *system && r.noise == noise && r.snr_db == snr_db
                                })
                                .and_then(|r| r.values.get(metric).copied())
                        })
                        .collect();
                    Group { snr_db, values }
                })
                .collect();
            Panel { noise, groups }
        })
        .collect();
    FigureData { metric: metric.to_string(), systems, panels }
}

impl FigureData {
    pub fn has_values(&self) -> bool {
        self.panels.iter().any(|p| p.groups.iter().any(|g| g.values.iter().any(Option::is_some)))
    }
}

/// Grouped-bar CSV: one row per (noise, SNR), one column per system.
pub fn grouped_bar_csv(fig: &FigureData) -> String {
    let mut out = String::from("noise,snr_db");
    for s in &fig.systems {
        out.push(',');
        out.push_str(s);
    }
    out.push('\n');
    for panel in &fig.panels {
        for group in &panel.groups {
            out.push_str(&format!("{},{}", panel.noise, group.snr_db));
            for v in &group.values {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#5778a4", "#e49444", "#6a9f58", "#d1615d", "#85b6b2", "#b8b0ac"];
const BAR_W: f64 = 18.0;
const BAR_GAP: f64 = 3.0;
const GROUP_GAP: f64 = 22.0;
const PLOT_H: f64 = 210.0;
const TOP: f64 = 56.0;
const LEFT: f64 = 64.0;
const PANEL_GAP: f64 = 34.0;
const BOTTOM: f64 = 52.0;

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// Render the grouped-bar chart as a standalone SVG document.
pub fn grouped_bar_svg(fig: &FigureData) -> String {
    let all: Vec<f64> = fig
        .panels
        .iter()
        .flat_map(|p| p.groups.iter().flat_map(|g| g.values.iter().flatten().copied()))
        .collect();
    let lo = all.iter().copied().fold(0.0f64, f64::min);
    let mut hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !hi.is_finite() || hi <= lo {
        hi = lo + 1.0;
    }
    let hi = hi + 0.08 * (hi - lo);
    let y = |v: f64| TOP + PLOT_H * (hi - v) / (hi - lo);

    let groups_per_panel = fig.panels.first().map(|p| p.groups.len()).unwrap_or(0);
    let group_w = fig.systems.len() as f64 * (BAR_W + BAR_GAP) + GROUP_GAP;
    let panel_w = (groups_per_panel as f64 * group_w + GROUP_GAP).max(80.0);
    let width = LEFT + fig.panels.len() as f64 * (panel_w + PANEL_GAP);
    let height = TOP + PLOT_H + BOTTOM;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!("<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{} by noise type and SNR</text>\n",
        width / 2.0,
        esc(&fig.metric)
    ));

    // Legend across the top.
    let mut lx = LEFT;
    for (i, system) in fig.systems.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        s.push_str(&format!(
            "<rect x=\"{lx}\" y=\"34\" width=\"11\" height=\"11\" fill=\"{color}\"/>\n"
        ));
        s.push_str(&format!("<text x=\"{}\" y=\"44\">{}</text>\n", lx + 15.0, esc(system)));
        lx += 15.0 + 8.0 * system.len() as f64 + 26.0;
    }

    // Shared y axis with five labeled gridlines.
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let yy = y(v);
        s.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{yy}\" x2=\"{}\" y2=\"{yy}\" stroke=\"#dddddd\"/>\n",
            width - PANEL_GAP
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" fill=\"#555555\">{}</text>\n",
            LEFT - 8.0,
            yy + 4.0,
            fmt(v)
        ));
    }
    s.push_str(&format!(
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\" fill=\"#333333\">{}</text>\n",
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0,
        esc(&fig.metric)
    ));

    let baseline = y(0.0f64.clamp(lo, hi));
    for (pi, panel) in fig.panels.iter().enumerate() {
        let px = LEFT + pi as f64 * (panel_w + PANEL_GAP);
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">({}) {}</text>\n",
            px + panel_w / 2.0,
            TOP + PLOT_H + 40.0,
            char::from(b'a' + (pi % 26) as u8),
            esc(&panel.noise)
        ));
        for (gi, group) in panel.groups.iter().enumerate() {
            let gx = px + GROUP_GAP + gi as f64 * group_w;
            let label_x = gx + (fig.systems.len() as f64 * (BAR_W + BAR_GAP)) / 2.0;
            s.push_str(&format!(
                "<text x=\"{label_x}\" y=\"{}\" text-anchor=\"middle\" fill=\"#333333\">{} dB</text>\n",
                TOP + PLOT_H + 18.0,
                group.snr_db
            ));
            for (bi, value) in group.values.iter().enumerate() {
                let Some(v) = value else { continue };
                let x = gx + bi as f64 * (BAR_W + BAR_GAP);
                let yv = y(*v);
                let (top, h) =
                    if yv <= baseline { (yv, baseline - yv) } else { (baseline, yv - baseline) };
                let color = PALETTE[bi % PALETTE.len()];
                s.push_str(&format!(
                    "<rect x=\"{x}\" y=\"{top}\" width=\"{BAR_W}\" height=\"{h}\" fill=\"{color}\"/>\n"
                ));
                s.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\" fill=\"#333333\">{}</text>\n",
                    x + BAR_W / 2.0,
                    top - 3.0,
                    fmt(*v)
                ));
            }
        }
        s.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\"/>\n",
            TOP + PLOT_H,
            px + panel_w,
            TOP + PLOT_H
        ));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "system,noise,snr_db,n,seg_snr,llr,wss,pesq,csig,cbak,covl\n\
        noisy,hum,-5,3,1.5,0.8,40,1.2,2.1,1.9,1.7\n\
        noisy,hum,0,3,2.5,0.7,35,1.5,2.3,2.0,1.9\n\
        noisy,hum,5,3,3.5,0.6,30,1.8,2.5,2.1,2.1\n\
        enhanced,hum,-5,3,4.5,0.5,25,2.2,3.1,2.4,2.6\n\
        enhanced,hum,0,3,5.5,0.4,20,2.5,3.3,2.5,2.8\n\
        enhanced,hum,5,3,6.5,0.3,15,2.8,3.5,2.6,3.0\n";

    #[test]
    fn parses_rows_and_regroups_by_metric() {
        let rows = parse_conditions_csv(SAMPLE).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].values["pesq"], 1.2);
        let fig = figure_data(&rows, "pesq");
        assert_eq!(fig.systems, vec!["noisy".to_string(), "enhanced".to_string()]);
        assert_eq!(fig.panels.len(), 1);
        assert_eq!(fig.panels[0].groups.len(), 3);
        assert_eq!(fig.panels[0].groups[0].values, vec![Some(1.2), Some(2.2)]);
        assert!(fig.has_values());
    }

    #[test]
    fn empty_cells_leave_gaps_not_errors() {
        let text = "system,noise,snr_db,n,seg_snr,pesq\nnoisy,hum,0,1,3.5,\n";
        let rows = parse_conditions_csv(text).unwrap();
        assert!(!rows[0].values.contains_key("pesq"));
        let fig = figure_data(&rows, "pesq");
        assert!(!fig.has_values());
        let fallback = figure_data(&rows, "seg_snr");
        assert!(fallback.has_values());
    }

    #[test]
    fn csv_emission_has_one_row_per_noise_and_snr() {
        let rows = parse_conditions_csv(SAMPLE).unwrap();
        let fig = figure_data(&rows, "pesq");
        let csv = grouped_bar_csv(&fig);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "noise,snr_db,noisy,enhanced");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "hum,-5,1.2,2.2");
    }

    #[test]
    fn svg_is_structured_and_deterministic() {
        let rows = parse_conditions_csv(SAMPLE).unwrap();
        let fig = figure_data(&rows, "pesq");
        let svg = grouped_bar_svg(&fig);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<rect").count(), 1 + 2 + 6, "backdrop, legend, bars");
        assert!(svg.contains("(a) hum"));
        assert!(svg.contains("-5 dB"));
        assert_eq!(svg, grouped_bar_svg(&fig));
    }

    #[test]
    fn malformed_tables_are_rejected_with_line_numbers() {
        assert!(parse_conditions_csv("").is_err());
        assert!(parse_conditions_csv("noise,snr_db\n").is_err());
        let err = parse_conditions_csv("system,noise,snr_db\nnoisy,hum\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
    }
}
