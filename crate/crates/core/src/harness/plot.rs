//! SVG and CSV renderings of scenarios, trajectories and communication masks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::monitor::{io, TeamTrajectory};
use crate::policy::CommMask;

use super::{EvalReport, Scenario};

const PX: f64 = 48.0;
const MARGIN: f64 = 24.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn region_fill(name: &str) -> &'static str {
    match name {
        "R" => "#9ecae1",
        "B" => "#bdbdbd",
        "M" => "none",
        n if n.starts_with("Init") => "#fee391",
        _ => "#c7e9c0",
    }
}

/// A trajectory drawn in a given style.
pub struct Layer<'a> {
    pub team: &'a TeamTrajectory,
    pub label: &'a str,
    pub dashed: bool,
}

/// Workspace map with regions and any number of trajectory layers.
pub fn map_svg(scenario: &Scenario, layers: &[Layer<'_>]) -> String {
    let w = &scenario.workspace;
    let width = (w.max[0] - w.min[0]) * PX + 2.0 * MARGIN;
    let height = (w.max[1] - w.min[1]) * PX + 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - w.min[0]) * PX;
    let py = |y: f64| MARGIN + (w.max[1] - y) * PX;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="white" stroke="black"/>"#,
        px(w.min[0]),
        py(w.max[1]),
        (w.max[0] - w.min[0]) * PX,
        (w.max[1] - w.min[1]) * PX
    );
    for region in &scenario.regions {
        let fill = region_fill(&region.name);
        let stroke = if fill == "none" { r##" stroke="#636363" stroke-dasharray="4 3""## } else { r##" stroke="#636363""## };
        for r in region.rects() {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}" fill-opacity="0.7"{stroke}/>"#,
                px(r.min[0]),
                py(r.max[1]),
                (r.max[0] - r.min[0]) * PX,
                (r.max[1] - r.min[1]) * PX
            );
        }
        let c = region.bounding_box().center();
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, px(c[0]), py(c[1]), region.name);
    }
    for layer in layers {
        for (j, m) in layer.team.members().iter().enumerate() {
            let color = PALETTE[j % PALETTE.len()];
            let pts: Vec<String> = m
                .trajectory
                .states
                .iter()
                .map(|x| format!("{:.2},{:.2}", px(x[0]), py(x[1])))
                .collect();
            let dash = if layer.dashed { r#" stroke-dasharray="5 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}><title>{} agent {}</title></polyline>"#,
                pts.join(" "),
                layer.label,
                m.id
            );
            if let Some(x) = m.trajectory.states.first() {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x[0]), py(x[1]));
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Agents by time grid; filled cells mark communication.
pub fn comm_svg(mask: &CommMask) -> String {
    let cell = 16.0;
    let left = 64.0;
    let top = 24.0;
    let h = mask.horizon();
    let n = mask.agents.len();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" font-family="sans-serif" font-size="10">"#,
        left + h as f64 * cell + 8.0,
        top + n as f64 * cell + 8.0
    );
    for (j, id) in mask.agents.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="4" y="{:.1}">agent {id}</text>"#, top + (j as f64 + 0.75) * cell);
    }
    for t in 0..h {
        if t % 5 == 0 {
            let _ = writeln!(s, r#"<text x="{:.1}" y="16">{t}</text>"#, left + t as f64 * cell);
        }
        for j in 0..n {
            let fill = if mask.comm[t][j] { "#08519c" } else { "#f0f0f0" };
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/>"#,
                left + t as f64 * cell,
                top + j as f64 * cell
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Inputs to [`emit_plots`]; every part is optional.
#[derive(Default)]
pub struct PlotInputs<'a> {
    pub trajectory: Option<&'a TeamTrajectory>,
    /// Drawn dashed under `trajectory`, e.g. the pre-repair rollout.
    pub original: Option<&'a TeamTrajectory>,
    pub comm: Option<&'a CommMask>,
    pub report: Option<&'a EvalReport>,
}

/// Writes `map.svg` plus whichever of `trajectory.csv`, `comm.svg`,
/// `comm.csv` and `robustness.csv` apply. Returns the written paths.
pub fn emit_plots(scenario: &Scenario, inputs: &PlotInputs<'_>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    let mut layers = Vec::new();
    if let Some(o) = inputs.original {
        layers.push(Layer {
            team: o,
            label: "original",
            dashed: true,
        });
    }
    if let Some(t) = inputs.trajectory {
        layers.push(Layer {
            team: t,
            label: "trajectory",
            dashed: false,
        });
    }
    put("map.svg", map_svg(scenario, &layers))?;
    if let Some(t) = inputs.trajectory {
        put("trajectory.csv", io::to_csv_string(t)?)?;
    }
    if let Some(o) = inputs.original {
        put("original.csv", io::to_csv_string(o)?)?;
    }
    if let Some(m) = inputs.comm {
        put("comm.svg", comm_svg(m))?;
        put("comm.csv", m.to_csv())?;
    }
    if let Some(r) = inputs.report {
        let mut csv = String::from("lower,count\n");
        for (lo, c) in &r.robustness.histogram {
            let _ = writeln!(csv, "{lo},{c}");
        }
        put("robustness.csv", csv)?;
    }
    Ok(written)
}
