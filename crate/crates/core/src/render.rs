//! Per-step SVG frames. Uncertain cells are shaded with opacity equal to
//! the believed occupancy; goals carry a countdown to their deadline.

use std::fmt::Write;

use crate::momdp::GridWorldSpec;
use crate::sim::TraceRecord;

const CELL: usize = 48;
const MARGIN: usize = 24;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

pub fn render_frame(spec: &GridWorldSpec, record: &TraceRecord) -> String {
    let w = spec.width * CELL + 2 * MARGIN;
    let h = spec.height * CELL + 2 * MARGIN;
    let origin = |x: usize, y: usize| (MARGIN + x * CELL, MARGIN + y * CELL);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-size="14">t = {}   realized = {:.2}</text>"#,
        MARGIN - 8,
        record.t,
        record.realized
    );

    for y in 0..spec.height {
        for x in 0..spec.width {
            let (px, py) = origin(x, y);
            let _ = writeln!(
                svg,
                r##"<rect x="{px}" y="{py}" width="{CELL}" height="{CELL}" fill="none" stroke="#bbb"/>"##
            );
        }
    }
    for c in &spec.static_obstacles {
        let (px, py) = origin(c.x, c.y);
        let _ = writeln!(svg, r##"<rect x="{px}" y="{py}" width="{CELL}" height="{CELL}" fill="#222"/>"##);
    }
    for (i, c) in spec.uncertain_cells.iter().enumerate() {
        let (px, py) = origin(c.x, c.y);
        let p = record.occupancy.get(i).copied().unwrap_or(0.0);
        let _ = writeln!(
            svg,
            r##"<rect x="{px}" y="{py}" width="{CELL}" height="{CELL}" fill="#222" fill-opacity="{p:.3}" stroke="#222" stroke-dasharray="4 3"/>"##
        );
    }

    for task in &record.tasks {
        let col = color(task.id);
        for g in &task.goal {
            let (px, py) = origin(g.x, g.y);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{col}" fill-opacity="0.15" stroke="{col}" stroke-width="3"/>"#,
                px + 3,
                py + 3,
                CELL - 6,
                CELL - 6
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="11" fill="{col}">{}</text>"#,
                px + 6,
                py + 15,
                task.t_end.saturating_sub(record.t)
            );
        }
    }

    for (i, c) in record.states.iter().enumerate() {
        let (px, py) = origin(c.x, c.y);
        let (cx, cy) = (px + CELL / 2, py + CELL / 2);
        let stroke = record.commitments.get(i).copied().flatten().map_or("#888", color);
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx}" cy="{cy}" r="{}" fill="white" stroke="{stroke}" stroke-width="4"/>"#,
            CELL / 3
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx}" y="{}" font-size="14" text-anchor="middle">{i}</text>"#,
            cy + 5
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momdp::Cell;
    use crate::scenario::{AgentConfig, GridConfig, Params, ScenarioConfig, TaskConfig, UncertainCell};
    use crate::sim::run_episode;

    #[test]
    fn frame_draws_every_element() {
        let cfg = ScenarioConfig {
            seed: 0,
            grid: GridConfig {
                width: 4,
                height: 3,
                obstacles: vec![Cell::new(0, 2)],
                uncertain: vec![UncertainCell { cell: Cell::new(2, 2), prior: 0.25, occupied: None }],
            },
            agents: vec![AgentConfig { start: Cell::new(0, 0) }],
            tasks: vec![TaskConfig {
                id: 0,
                goal: vec![Cell::new(3, 0)],
                start: 0,
                end: 5,
                rewards: vec![0.0, 5.0],
                candidates: None,
            }],
            generator: None,
            params: Params::default(),
        };
        let ep = run_episode(&cfg).unwrap();
        let svg = render_frame(&cfg.grid_spec(), &ep.records[0]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"fill-opacity="0.250""#));
        assert!(svg.contains("<circle"));
        assert!(svg.contains(">5</text>"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
