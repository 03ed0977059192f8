//! Wavefront OBJ export of composed skeletons, using only `v` and `l` elements.

use std::io::Write;

use crate::error::{Error, Result};
use crate::skeleton::{Shape3D, SkeletonSpec};

/// Significant digits written per coordinate.
pub const OBJ_SIGNIFICANT_DIGITS: usize = 9;

/// Fixed-point rendering of `v` with `digits` significant digits, trailing zeros trimmed.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { v.to_string() };
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Writes one `v` line per keypoint and one 1-based `l` line per edge.
pub fn write_obj<W: Write>(w: &mut W, shape: &Shape3D, spec: &SkeletonSpec) -> Result<()> {
    if shape.num_keypoints() != spec.num_keypoints() {
        return Err(Error::DimensionMismatch {
            what: "shape keypoints",
            expected: spec.num_keypoints(),
            got: shape.num_keypoints(),
        });
    }
    writeln!(w, "# {} skeleton", spec.category)?;
    for c in shape.coords.column_iter() {
        let [x, y, z] = [c[0], c[1], c[2]].map(|v| format_significant(v, OBJ_SIGNIFICANT_DIGITS));
        writeln!(w, "v {x} {y} {z}")?;
    }
    for &(a, b) in &spec.edges {
        writeln!(w, "l {} {}", a + 1, b + 1)?;
    }
    Ok(())
}

/// Vertices and line elements read back from an OBJ file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjWireframe {
    pub vertices: Vec<[f64; 3]>,
    /// Zero-based vertex pairs.
    pub lines: Vec<(usize, usize)>,
}

/// Minimal reader for the subset written by [`write_obj`]. Polyline `l` elements are
/// split into consecutive pairs.
pub fn parse_obj(text: &str) -> Result<ObjWireframe> {
    let mut out = ObjWireframe::default();
    let mut pending = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("OBJ line {}: {what}", lineno + 1));
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let v: Vec<f64> = parts
                    .map(|p| p.parse::<f64>().map_err(|_| bad("bad coordinate")))
                    .collect::<Result<_>>()?;
                if v.len() < 3 {
                    return Err(bad("vertex needs 3 coordinates"));
                }
                out.vertices.push([v[0], v[1], v[2]]);
            }
            Some("l") => {
                let idx: Vec<usize> = parts
                    .map(|p| {
                        let head = p.split('/').next().unwrap_or(p);
                        match head.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(bad("bad vertex index")),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 2 {
                    return Err(bad("line element needs 2 vertices"));
                }
                pending.push((lineno + 1, idx));
            }
            Some(other) => return Err(bad(&format!("unsupported element `{other}`"))),
            None => {}
        }
    }
    for (lineno, idx) in pending {
        if idx.iter().any(|&i| i >= out.vertices.len()) {
            return Err(Error::Format(format!("OBJ line {lineno}: vertex index out of range")));
        }
        out.lines.extend(idx.windows(2).map(|w| (w[0], w[1])));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{compose_skeleton, BaseShapeSet, StructuralParams};

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.0, 9), "0");
        assert_eq!(format_significant(-0.0, 9), "0");
        assert_eq!(format_significant(1.0, 9), "1");
        assert_eq!(format_significant(0.123456789012, 9), "0.123456789");
        assert_eq!(format_significant(-12.3456789012, 9), "-12.3456789");
        assert_eq!(format_significant(1.5e-7, 9), "0.00000015");
        assert!(!format_significant(3.2e-12, 9).contains('e'));
    }

    #[test]
    fn mean_chair_exports_and_reimports() {
        let bases = BaseShapeSet::bundled("chair").unwrap();
        let alpha = StructuralParams::from_free(&[0.4, -0.7, 0.25]);
        let y = compose_skeleton(&alpha, &bases).unwrap();
        let mut buf = Vec::new();
        write_obj(&mut buf, &y, &bases.spec).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 10);
        assert_eq!(text.lines().filter(|l| l.starts_with("l ")).count(), bases.spec.edges.len());

        let back = parse_obj(&text).unwrap();
        assert_eq!(back.lines, bases.spec.edges);
        for (v, c) in back.vertices.iter().zip(y.coords.column_iter()) {
            for a in 0..3 {
                let tol = 5e-9 * c[a].abs().max(1e-9);
                assert!((v[a] - c[a]).abs() <= tol, "{} vs {}", v[a], c[a]);
            }
        }
    }

    #[test]
    fn parser_rejects_garbage() {
        assert!(parse_obj("v 1 2\n").is_err());
        assert!(parse_obj("v 1 2 3\nl 1 2\n").is_err());
        assert!(parse_obj("f 1 2 3\n").is_err());
        let ok = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nl 1 2 3\n").unwrap();
        assert_eq!(ok.lines, vec![(0, 1), (1, 2)]);
    }
}
