//! Maze rollout overlay: walls, the executed path as a hue-gradient line
//! (red at the start, violet at the end), the goal star, and every
//! generated plan as a polyline with key-point dots anchored at a red dot.

use super::svg::{hsv_to_rgb, SvgDoc};
use super::VizError;
use crate::envs::maze::MazeLayout;
use crate::pipeline::RolloutRecord;

const CELL_PX: f64 = 40.0;

fn star_points(cx: f64, cy: f64, r_outer: f64, r_inner: f64) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(10);
    for k in 0..10 {
        let r = if k % 2 == 0 { r_outer } else { r_inner };
        let a = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
        pts.push((cx + r * a.cos(), cy + r * a.sin()));
    }
    pts
}

/// Renders the rollout over the maze. Plans must be stored in absolute
/// coordinates (the rollout recorder guarantees this) and the plan feature
/// layout must contain both planar state dimensions.
pub fn render_plan_overlay(record: &RolloutRecord, layout: &MazeLayout) -> Result<String, VizError> {
    let ix = record.plan_spec.state_indices.iter().position(|&i| i == 0);
    let iy = record.plan_spec.state_indices.iter().position(|&i| i == 1);
    let (ix, iy) = match (record.plans.is_empty(), ix, iy) {
        (true, _, _) => (0, 1),
        (false, Some(a), Some(b)) => (a, b),
        _ => {
            return Err(VizError::NotPlanar(
                "plan features lack the (x, y) state dimensions; include state indices 0 and 1 \
                 in the plan's state_indices to visualize plans"
                    .into(),
            ))
        }
    };

    let w = layout.width() as f64 * CELL_PX;
    let h = layout.height() as f64 * CELL_PX;
    let mut doc = SvgDoc::new(w, h);
    doc.rect(0.0, 0.0, w, h, "#ffffff", "background");
    for (r, row) in layout.walls.iter().enumerate() {
        for (c, &wall) in row.iter().enumerate() {
            if wall {
                doc.rect(
                    c as f64 * CELL_PX,
                    r as f64 * CELL_PX,
                    CELL_PX,
                    CELL_PX,
                    "#333333",
                    "wall",
                );
            }
        }
    }

    // Executed path, red fading to violet.
    let n_seg = record.states.len().saturating_sub(1);
    for i in 0..n_seg {
        let (a, b) = (&record.states[i], &record.states[i + 1]);
        let hue = 270.0 * i as f64 / n_seg.max(1) as f64;
        let (r, g, bl) = hsv_to_rgb(hue, 0.9, 0.9);
        doc.line(
            a[0] as f64 * CELL_PX,
            a[1] as f64 * CELL_PX,
            b[0] as f64 * CELL_PX,
            b[1] as f64 * CELL_PX,
            &format!("rgb({r},{g},{bl})"),
            3.0,
            "path-seg",
        );
    }

    // Plans: one polyline each, key-point dots, red anchor dot.
    for (pi, pr) in record.plans.iter().enumerate() {
        let hue = 200.0 + 120.0 * pi as f64 / record.plans.len().max(1) as f64;
        let (r, g, b) = hsv_to_rgb(hue, 0.7, 0.75);
        let color = format!("rgb({r},{g},{b})");
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(pr.plan.len() + 1);
        let anchor = &pr.plan.anchor_state;
        pts.push((anchor[0] as f64 * CELL_PX, anchor[1] as f64 * CELL_PX));
        for tok in &pr.plan.tokens {
            pts.push((tok[ix] as f64 * CELL_PX, tok[iy] as f64 * CELL_PX));
        }
        doc.polyline(&pts, &color, 1.5, "plan-line");
        for &(x, y) in &pts[1..] {
            doc.circle(x, y, 3.0, &color, "plan-point");
        }
        doc.circle(pts[0].0, pts[0].1, 4.0, "#d62728", "plan-anchor");
    }

    // Goal star.
    let (gx, gy) = layout.cell_center(layout.goal_cell);
    let star = star_points(
        gx as f64 * CELL_PX,
        gy as f64 * CELL_PX,
        CELL_PX * 0.38,
        CELL_PX * 0.16,
    );
    doc.polygon(&star, "#f0c419", "goal-star");

    Ok(doc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::PlanFeatureSpec;
    use crate::viz::svg::is_well_formed_xml;

    fn empty_record() -> RolloutRecord {
        RolloutRecord {
            env_name: "maze-umaze".into(),
            seed: 0,
            states: vec![vec![1.5, 3.5]],
            actions: vec![],
            rewards: vec![],
            plans: vec![],
            attention: vec![],
            normalized_score: 0.0,
            success: false,
            plan_spec: PlanFeatureSpec::states_only(vec![0, 1]),
            layout: crate::sequence::Layout {
                n_goal_tokens: 1,
                n_plan_tokens: 2,
                context_len: 3,
            },
        }
    }

    #[test]
    fn empty_rollout_renders_maze_and_goal_only() {
        let layout = MazeLayout::builtin("umaze").unwrap();
        let svg = render_plan_overlay(&empty_record(), &layout).unwrap();
        assert!(is_well_formed_xml(&svg));
        assert!(svg.contains("goal-star"));
        assert!(!svg.contains("path-seg"));
    }

    #[test]
    fn non_planar_plan_features_error_mentions_state_indices() {
        let layout = MazeLayout::builtin("umaze").unwrap();
        let mut rec = empty_record();
        rec.plan_spec = PlanFeatureSpec::states_only(vec![1]);
        rec.plans.push(crate::pipeline::PlanRecord {
            step: 0,
            plan: crate::plan::Plan {
                tokens: vec![vec![0.5]],
                source_indices: vec![0],
                anchor_state: vec![1.5, 3.5],
                is_relative: false,
            },
        });
        let err = render_plan_overlay(&rec, &layout).unwrap_err();
        assert!(err.to_string().contains("state_indices"));
    }
}
