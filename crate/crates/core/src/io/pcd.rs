use std::fmt::Write as _;

use super::scalar::{as_label, Scalar};
use super::{next_line, Encoding, FormatError, RawCloud, FRAME_COMMENT};
use crate::cloud::{ClassTable, SemanticPointCloud};
use crate::geom::Point3;

struct Field {
    name: String,
    ty: Scalar,
    count: usize,
}

pub fn parse_pcd(bytes: &[u8]) -> Result<RawCloud, FormatError> {
    let mut pos = 0;
    let mut classes = ClassTable::empty();
    let mut has_classes = false;
    let mut names: Vec<String> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut types: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut width = None;
    let mut height = None;
    let mut points = None;
    let binary;
    loop {
        let start = pos;
        let (line, next) = next_line(bytes, pos)
            .ok_or_else(|| FormatError::header(start, "header ended before DATA"))?;
        pos = next;
        if let Some(c) = line.strip_prefix('#') {
            has_classes |= classes.parse_comment_line(c.trim());
            continue;
        }
        let mut tok = line.split_whitespace();
        let Some(key) = tok.next() else { continue };
        let rest: Vec<&str> = tok.collect();
        let ints = |what: &str| -> Result<Vec<usize>, FormatError> {
            rest.iter()
                .map(|t| t.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| FormatError::header(start, format!("{what} expects integers")))
        };
        match key.to_ascii_uppercase().as_str() {
            "VERSION" | "VIEWPOINT" => {}
            "FIELDS" => names = rest.iter().map(|s| s.to_string()).collect(),
            "SIZE" => sizes = ints("SIZE")?,
            "TYPE" => types = rest.iter().map(|s| s.to_ascii_uppercase()).collect(),
            "COUNT" => counts = ints("COUNT")?,
            "WIDTH" => width = ints("WIDTH")?.first().copied(),
            "HEIGHT" => height = ints("HEIGHT")?.first().copied(),
            "POINTS" => points = ints("POINTS")?.first().copied(),
            "DATA" => {
                binary = match rest.first().copied() {
                    Some("ascii") => false,
                    Some("binary") => true,
                    other => {
                        return Err(FormatError::UnsupportedEncoding {
                            offset: start,
                            encoding: other.unwrap_or("").to_string(),
                        })
                    }
                };
                break;
            }
            other => return Err(FormatError::header(start, format!("unknown key `{other}`"))),
        }
    }
    if counts.is_empty() {
        counts = vec![1; names.len()];
    }
    if names.is_empty() || sizes.len() != names.len() || types.len() != names.len() || counts.len() != names.len() {
        return Err(FormatError::header(pos, "FIELDS/SIZE/TYPE/COUNT lengths disagree"));
    }
    let mut fields = Vec::with_capacity(names.len());
    for i in 0..names.len() {
        let ty = Scalar::from_pcd(&types[i], sizes[i]).ok_or_else(|| {
            FormatError::header(pos, format!("unsupported field type {}{}", types[i], sizes[i]))
        })?;
        fields.push(Field {
            name: names[i].clone(),
            ty,
            count: counts[i],
        });
    }
    let n = match (points, width, height) {
        (Some(p), _, _) => p,
        (None, Some(w), h) => w * h.unwrap_or(1),
        _ => return Err(FormatError::header(pos, "missing POINTS and WIDTH")),
    };
    // Column of the first element of each named field.
    let mut columns = Vec::with_capacity(fields.len());
    let mut col = 0;
    for f in &fields {
        columns.push(col);
        col += f.count;
    }
    let ncols = col;
    let find = |want: &[&str]| fields.iter().position(|f| want.contains(&f.name.as_str())).map(|i| (i, columns[i]));
    let (Some(x), Some(y), Some(z)) = (find(&["x"]), find(&["y"]), find(&["z"])) else {
        return Err(FormatError::header(pos, "FIELDS lack x, y or z"));
    };
    let lab = find(&["label", "class"]);
    let mat = find(&["material"]);

    let mut out = RawCloud {
        points: Vec::with_capacity(n),
        labels: lab.map(|_| Vec::with_capacity(n)),
        materials: mat.map(|_| Vec::with_capacity(n)),
        classes: has_classes.then_some(classes),
    };
    let mut vals = vec![0.0; ncols];
    let stride: usize = fields.iter().map(|f| f.ty.size() * f.count).sum();
    for found in 0..n {
        let start = pos;
        if binary {
            let Some(rec) = bytes.get(pos..pos + stride) else {
                return Err(FormatError::Truncated { offset: start, expected: n, found });
            };
            let mut off = 0;
            let mut c = 0;
            for f in &fields {
                for _ in 0..f.count {
                    vals[c] = f.ty.read_le(&rec[off..]);
                    off += f.ty.size();
                    c += 1;
                }
            }
            pos += stride;
        } else {
            let line = loop {
                let Some((line, next)) = next_line(bytes, pos) else {
                    return Err(FormatError::Truncated { offset: start, expected: n, found });
                };
                pos = next;
                if !line.trim().is_empty() {
                    break line;
                }
            };
            let mut tok = line.split_whitespace();
            let mut c = 0;
            for f in &fields {
                for _ in 0..f.count {
                    let t = tok
                        .next()
                        .ok_or_else(|| FormatError::payload(start, format!("missing value for `{}`", f.name)))?;
                    vals[c] = f
                        .ty
                        .parse_text(t)
                        .ok_or_else(|| FormatError::payload(start, format!("bad value `{t}` for `{}`", f.name)))?;
                    c += 1;
                }
            }
        }
        out.points.push(Point3::new(vals[x.1], vals[y.1], vals[z.1]));
        if let (Some((_, c)), Some(l)) = (lab, out.labels.as_mut()) {
            l.push(as_label(vals[c]).ok_or_else(|| FormatError::payload(start, "label is not a u32"))?);
        }
        if let (Some((_, c)), Some(m)) = (mat, out.materials.as_mut()) {
            m.push(as_label(vals[c]).ok_or_else(|| FormatError::payload(start, "material is not a u32"))?);
        }
    }
    Ok(out)
}

pub fn to_pcd_bytes(cloud: &SemanticPointCloud, encoding: Encoding) -> Vec<u8> {
    let with_mat = cloud.materials.is_some();
    let mut h = String::new();
    let _ = writeln!(h, "# {FRAME_COMMENT}");
    for c in cloud.classes.to_comment_lines() {
        let _ = writeln!(h, "# {c}");
    }
    h.push_str("VERSION .7\n");
    if with_mat {
        h.push_str("FIELDS x y z label material\nSIZE 4 4 4 4 4\nTYPE F F F U U\nCOUNT 1 1 1 1 1\n");
    } else {
        h.push_str("FIELDS x y z label\nSIZE 4 4 4 4\nTYPE F F F U\nCOUNT 1 1 1 1\n");
    }
    let _ = writeln!(h, "WIDTH {}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {}", cloud.len(), cloud.len());
    h.push_str(match encoding {
        Encoding::Ascii => "DATA ascii\n",
        Encoding::Binary => "DATA binary\n",
    });
    let mut out = h.into_bytes();
    match encoding {
        Encoding::Binary => {
            for i in 0..cloud.len() {
                let p = cloud.points[i];
                for c in [p.x, p.y, p.z] {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
                out.extend_from_slice(&cloud.labels[i].0.to_le_bytes());
                if let Some(m) = &cloud.materials {
                    out.extend_from_slice(&m[i].to_le_bytes());
                }
            }
        }
        Encoding::Ascii => {
            let mut s = String::new();
            for i in 0..cloud.len() {
                let p = cloud.points[i];
                let _ = write!(s, "{} {} {} {}", p.x as f32, p.y as f32, p.z as f32, cloud.labels[i].0);
                if let Some(m) = &cloud.materials {
                    let _ = write!(s, " {}", m[i]);
                }
                s.push('\n');
            }
            out.extend_from_slice(s.as_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_without_label() {
        let text = b"VERSION .7\nFIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\nWIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA ascii\n1 2 3 0.5\n4 5 6 0.1\n";
        let raw = parse_pcd(text).unwrap();
        assert_eq!(raw.points.len(), 2);
        assert!(raw.labels.is_none());
        assert_eq!(raw.points[1], Point3::new(4.0, 5.0, 6.0));
    }

    #[test]
    fn compressed_is_unsupported() {
        let text = b"FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nWIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA binary_compressed\n";
        assert!(matches!(
            parse_pcd(text),
            Err(FormatError::UnsupportedEncoding { offset: 61, .. })
        ));
    }

    #[test]
    fn truncated_binary() {
        let mut text = b"FIELDS x y z label\nSIZE 4 4 4 4\nTYPE F F F U\nPOINTS 5\nDATA binary\n".to_vec();
        text.extend(std::iter::repeat_n(0u8, 16 * 4));
        assert!(matches!(
            parse_pcd(&text),
            Err(FormatError::Truncated { expected: 5, found: 4, .. })
        ));
    }

    #[test]
    fn mismatched_field_lists() {
        let text = b"FIELDS x y z\nSIZE 4 4\nTYPE F F F\nPOINTS 0\nDATA ascii\n";
        assert!(matches!(parse_pcd(text), Err(FormatError::MalformedHeader { .. })));
    }
}
