//! Attention heatmap: up to three layers map to the red, green, and blue
//! channels (heads averaged per layer); additional layers render as
//! separate grayscale panels. Column bands along the top mark token
//! modalities so plan-token columns are identifiable.

use super::svg::SvgDoc;
use super::VizError;
use crate::model::AttentionCapture;
use crate::sequence::Modality;
use crate::tensor::Float;

const CELL: f64 = 10.0;
const RULER: f64 = 16.0;
const GAP: f64 = 2.0 * CELL;

fn band_color(m: Modality) -> &'static str {
    match m {
        Modality::Goal => "#c7e9c0",
        Modality::Rtg => "#fdd0a2",
        Modality::State => "#c6dbef",
        Modality::Plan => "#dadaeb",
        Modality::Action => "#fcbba1",
    }
}

fn channel(v: Float) -> u8 {
    (255.0 * v.clamp(0.0, 1.0) as f64).round() as u8
}

/// Renders one capture over the given token modality layout.
pub fn render_attention(capture: &AttentionCapture, tags: &[Modality]) -> Result<String, VizError> {
    if capture.layers.is_empty() || capture.seq_len == 0 {
        return Err(VizError::EmptyCapture);
    }
    if tags.len() != capture.seq_len {
        return Err(VizError::NotPlanar(format!(
            "layout has {} tokens but capture covers {}",
            tags.len(),
            capture.seq_len
        )));
    }
    let l = capture.seq_len;
    let rgb_layers = capture.n_layers().min(3);
    let extra = capture.n_layers() - rgb_layers;
    let panels = 1 + extra;
    let width = panels as f64 * (l as f64 * CELL) + (panels - 1) as f64 * GAP;
    let height = RULER + l as f64 * CELL + 4.0;
    let mut doc = SvgDoc::new(width, height);

    let means: Vec<Vec<Float>> = (0..capture.n_layers())
        .map(|li| capture.layer_mean(li))
        .collect();

    // Modality ruler above the first panel.
    let mut band_start = 0usize;
    for j in 0..=l {
        let boundary = j == l || (j > 0 && tags[j] != tags[band_start]);
        if boundary {
            let x0 = band_start as f64 * CELL;
            let x1 = j as f64 * CELL;
            doc.rect(x0, 0.0, x1 - x0, RULER - 4.0, band_color(tags[band_start]), "band");
            if x1 - x0 >= 3.0 * CELL {
                let label = format!("{:?}", tags[band_start]).to_lowercase();
                doc.text(x0 + 2.0, RULER - 6.0, 8.0, &label);
            }
            band_start = j;
        }
    }

    // Main panel: layers 0..3 as RGB channels.
    for i in 0..l {
        for j in 0..l {
            let r = if rgb_layers > 0 { channel(means[0][i * l + j]) } else { 0 };
            let g = if rgb_layers > 1 { channel(means[1][i * l + j]) } else { 0 };
            let b = if rgb_layers > 2 { channel(means[2][i * l + j]) } else { 0 };
            doc.rect(
                j as f64 * CELL,
                RULER + i as f64 * CELL,
                CELL,
                CELL,
                &format!("rgb({r},{g},{b})"),
                "attn-cell",
            );
        }
    }

    // Extra layers as grayscale panels.
    for (p, mean) in means.iter().enumerate().skip(3) {
        let x_off = (p - 2) as f64 * (l as f64 * CELL + GAP);
        for i in 0..l {
            for j in 0..l {
                let v = channel(mean[i * l + j]);
                doc.rect(
                    x_off + j as f64 * CELL,
                    RULER + i as f64 * CELL,
                    CELL,
                    CELL,
                    &format!("rgb({v},{v},{v})"),
                    "attn-cell-gray",
                );
            }
        }
    }

    Ok(doc.finish())
}
