use std::fmt::Write as _;

use super::scalar::{as_label, Scalar};
use super::{next_line, Encoding, FormatError, RawCloud, FRAME_COMMENT};
use crate::cloud::{ClassTable, SemanticPointCloud};
use crate::geom::Point3;

const LABEL_NAMES: [&str; 3] = ["label", "class", "semantic"];

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

pub fn parse_ply(bytes: &[u8]) -> Result<RawCloud, FormatError> {
    let (first, mut pos) = next_line(bytes, 0).ok_or_else(|| FormatError::header(0, "empty file"))?;
    if first.trim() != "ply" {
        return Err(FormatError::header(0, "missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut classes = ClassTable::empty();
    let mut has_classes = false;
    loop {
        let line_start = pos;
        let (line, next) = next_line(bytes, pos)
            .ok_or_else(|| FormatError::header(line_start, "header ended before `end_header`"))?;
        pos = next;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let enc = tok.next().unwrap_or("");
                format = Some(match enc {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => {
                        return Err(FormatError::UnsupportedEncoding {
                            offset: line_start,
                            encoding: other.to_string(),
                        })
                    }
                });
            }
            Some("comment") => {
                let rest = line.trim_start()["comment".len()..].trim();
                has_classes |= classes.parse_comment_line(rest);
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| FormatError::header(line_start, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| FormatError::header(line_start, "element count is not an integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| FormatError::header(line_start, "property before any element"))?;
                let ty = tok.next().unwrap_or("");
                let prop = if ty == "list" {
                    let count = tok.next().and_then(Scalar::from_ply);
                    let item = tok.next().and_then(Scalar::from_ply);
                    match (count, item) {
                        (Some(count), Some(item)) => Property::List { count, item },
                        _ => return Err(FormatError::header(line_start, "bad list property types")),
                    }
                } else {
                    let ty = Scalar::from_ply(ty)
                        .ok_or_else(|| FormatError::header(line_start, format!("unknown property type `{ty}`")))?;
                    let name = tok.next().ok_or_else(|| FormatError::header(line_start, "property without name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(FormatError::header(line_start, format!("unexpected keyword `{other}`")))
            }
        }
    }
    let format = format.ok_or_else(|| FormatError::header(pos, "no `format` line"))?;
    let vidx = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| FormatError::header(pos, "no `vertex` element"))?;

    let find = |names: &[&str]| {
        elements[vidx].props.iter().position(
            |p| matches!(p, Property::Scalar { name, .. } if names.contains(&name.as_str())),
        )
    };
    let (Some(ix), Some(iy), Some(iz)) = (find(&["x"]), find(&["y"]), find(&["z"])) else {
        return Err(FormatError::header(pos, "vertex element lacks x, y or z"));
    };
    let il = find(&LABEL_NAMES);
    let im = find(&["material"]);

    let mut reader = Body {
        bytes,
        pos,
        format,
    };
    for el in &elements[..vidx] {
        for _ in 0..el.count {
            reader.skip_instance(el)?;
        }
    }
    let el = &elements[vidx];
    let mut out = RawCloud {
        points: Vec::with_capacity(el.count),
        labels: il.map(|_| Vec::with_capacity(el.count)),
        materials: im.map(|_| Vec::with_capacity(el.count)),
        classes: has_classes.then_some(classes),
    };
    let mut vals = vec![0.0; el.props.len()];
    for found in 0..el.count {
        let start = reader.pos;
        if !reader.read_instance(el, &mut vals)? {
            return Err(FormatError::Truncated {
                offset: start,
                expected: el.count,
                found,
            });
        }
        out.points.push(Point3::new(vals[ix], vals[iy], vals[iz]));
        if let (Some(i), Some(l)) = (il, out.labels.as_mut()) {
            l.push(as_label(vals[i]).ok_or_else(|| FormatError::payload(start, "label is not a u32"))?);
        }
        if let (Some(i), Some(m)) = (im, out.materials.as_mut()) {
            m.push(as_label(vals[i]).ok_or_else(|| FormatError::payload(start, "material is not a u32"))?);
        }
    }
    Ok(out)
}

struct Body<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: Format,
}

impl Body<'_> {
    /// Reads one element instance into `vals` (list properties are skipped and
    /// leave their slot at 0). Returns false at end of input.
    fn read_instance(&mut self, el: &Element, vals: &mut [f64]) -> Result<bool, FormatError> {
        match self.format {
            Format::BinaryLe => {
                for (k, p) in el.props.iter().enumerate() {
                    match p {
                        Property::Scalar { ty, .. } => match self.take(ty.size()) {
                            Some(b) => vals[k] = ty.read_le(b),
                            None => return Ok(false),
                        },
                        Property::List { count, item } => {
                            let Some(b) = self.take(count.size()) else {
                                return Ok(false);
                            };
                            let n = count.read_le(b) as usize;
                            if self.take(n * item.size()).is_none() {
                                return Ok(false);
                            }
                        }
                    }
                }
                Ok(true)
            }
            Format::Ascii => {
                let start = self.pos;
                let Some((line, next)) = self.next_data_line() else {
                    return Ok(false);
                };
                let mut tok = line.split_whitespace();
                for (k, p) in el.props.iter().enumerate() {
                    match p {
                        Property::Scalar { ty, name } => {
                            let t = tok.next().ok_or_else(|| {
                                FormatError::payload(start, format!("missing value for `{name}`"))
                            })?;
                            vals[k] = ty.parse_text(t).ok_or_else(|| {
                                FormatError::payload(start, format!("bad value `{t}` for `{name}`"))
                            })?;
                        }
                        Property::List { .. } => {
                            let n: usize = tok
                                .next()
                                .and_then(|t| t.parse().ok())
                                .ok_or_else(|| FormatError::payload(start, "bad list count"))?;
                            for _ in 0..n {
                                tok.next();
                            }
                        }
                    }
                }
                self.pos = next;
                Ok(true)
            }
        }
    }

    fn skip_instance(&mut self, el: &Element) -> Result<(), FormatError> {
        let start = self.pos;
        let mut scratch = vec![0.0; el.props.len()];
        if self.read_instance(el, &mut scratch)? {
            Ok(())
        } else {
            Err(FormatError::payload(start, format!("element `{}` truncated", el.name)))
        }
    }

    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let end = self.pos.checked_add(n)?;
        let b = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(b)
    }

    fn next_data_line(&mut self) -> Option<(&str, usize)> {
        let mut pos = self.pos;
        loop {
            let (line, next) = next_line(self.bytes, pos)?;
            if !line.trim().is_empty() {
                return Some((line, next));
            }
            pos = next;
            self.pos = next;
        }
    }
}

pub fn to_ply_bytes(cloud: &SemanticPointCloud, encoding: Encoding) -> Vec<u8> {
    let mut h = String::new();
    h.push_str("ply\n");
    h.push_str(match encoding {
        Encoding::Ascii => "format ascii 1.0\n",
        Encoding::Binary => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(h, "comment {FRAME_COMMENT}");
    for c in cloud.classes.to_comment_lines() {
        let _ = writeln!(h, "comment {c}");
    }
    let _ = writeln!(h, "element vertex {}", cloud.len());
    h.push_str("property float x\nproperty float y\nproperty float z\nproperty uint label\n");
    if cloud.materials.is_some() {
        h.push_str("property uint material\n");
    }
    h.push_str("end_header\n");
    let mut out = h.into_bytes();
    match encoding {
        Encoding::Binary => {
            out.reserve(cloud.len() * 20);
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
            let mut s = String::with_capacity(cloud.len() * 32);
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
