//! Small SVG builder; string assembly only, no external resources.

use std::fmt::Write;

pub struct SvgDoc {
    width: f64,
    height: f64,
    body: String,
}

impl SvgDoc {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, class: &str) {
        let class_attr = if class.is_empty() {
            String::new()
        } else {
            format!(" class=\"{class}\"")
        };
        writeln!(
            self.body,
            "<rect{class_attr} x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>"
        )
        .unwrap();
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, class: &str) {
        let class_attr = if class.is_empty() {
            String::new()
        } else {
            format!(" class=\"{class}\"")
        };
        writeln!(
            self.body,
            "<line{class_attr} x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width:.2}\" stroke-linecap=\"round\"/>"
        )
        .unwrap();
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str, class: &str) {
        let class_attr = if class.is_empty() {
            String::new()
        } else {
            format!(" class=\"{class}\"")
        };
        writeln!(
            self.body,
            "<circle{class_attr} cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"{fill}\"/>"
        )
        .unwrap();
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64, class: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let class_attr = if class.is_empty() {
            String::new()
        } else {
            format!(" class=\"{class}\"")
        };
        writeln!(
            self.body,
            "<polyline{class_attr} points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width:.2}\"/>",
            pts.join(" ")
        )
        .unwrap();
    }

    pub fn polygon(&mut self, points: &[(f64, f64)], fill: &str, class: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let class_attr = if class.is_empty() {
            String::new()
        } else {
            format!(" class=\"{class}\"")
        };
        writeln!(
            self.body,
            "<polygon{class_attr} points=\"{}\" fill=\"{fill}\"/>",
            pts.join(" ")
        )
        .unwrap();
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.1}\" font-family=\"monospace\">{}</text>",
            escape(content)
        )
        .unwrap();
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.2} {:.2}\">\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Hue (degrees), saturation, value in [0,1] to 8-bit RGB.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    )
}

/// Minimal well-formedness check for the XML this module emits: balanced,
/// properly nested tags, quoted attributes, one root element.
pub fn is_well_formed_xml(s: &str) -> bool {
    let mut stack: Vec<String> = Vec::new();
    let mut roots = 0usize;
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let Some(close_rel) = find_tag_end(&s[i..]) else {
            return false;
        };
        let tag = &s[i + 1..i + close_rel];
        i += close_rel + 1;
        if tag.starts_with('?') || tag.starts_with('!') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            match stack.pop() {
                Some(open) if open == name.trim() => {}
                _ => return false,
            }
            if stack.is_empty() {
                roots += 1;
            }
        } else {
            let self_closing = tag.ends_with('/');
            let body = tag.trim_end_matches('/');
            let name = body.split_whitespace().next().unwrap_or("");
            if name.is_empty() || !attributes_quoted(body) {
                return false;
            }
            if self_closing {
                if stack.is_empty() {
                    roots += 1;
                }
            } else {
                stack.push(name.to_string());
            }
        }
    }
    stack.is_empty() && roots == 1
}

/// Index of the '>' ending the tag opened at position 0, skipping quoted
/// attribute values.
fn find_tag_end(s: &str) -> Option<usize> {
    let mut in_quote = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '>' if !in_quote => return Some(i),
            _ => {}
        }
    }
    None
}

fn attributes_quoted(tag_body: &str) -> bool {
    // Every '=' inside a tag must be followed by a quoted value.
    let mut rest = tag_body;
    while let Some(eq) = rest.find('=') {
        let after = rest[eq + 1..].trim_start();
        if !after.starts_with('"') {
            return false;
        }
        let Some(close) = after[1..].find('"') else {
            return false;
        };
        rest = &after[close + 2..];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_output_is_well_formed() {
        let mut doc = SvgDoc::new(100.0, 50.0);
        doc.rect(0.0, 0.0, 10.0, 10.0, "#333", "wall");
        doc.line(0.0, 0.0, 5.0, 5.0, "red", 1.0, "");
        doc.circle(3.0, 3.0, 1.5, "rgb(1,2,3)", "dot");
        doc.polyline(&[(0.0, 0.0), (1.0, 2.0)], "blue", 0.5, "p");
        doc.text(1.0, 1.0, 8.0, "a < b & c");
        assert!(is_well_formed_xml(&doc.finish()));
    }

    #[test]
    fn checker_rejects_mismatches() {
        assert!(!is_well_formed_xml("<svg><rect></svg>"));
        assert!(!is_well_formed_xml("<svg x=unquoted></svg>"));
        assert!(is_well_formed_xml("<svg><g><rect/></g></svg>"));
        assert!(!is_well_formed_xml("<a></a><b></b>"));
    }

    #[test]
    fn hsv_endpoints() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), (255, 0, 0));
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), (0, 255, 0));
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), (0, 0, 255));
        assert_eq!(hsv_to_rgb(0.0, 0.0, 0.5), (128, 128, 128));
    }
}
