#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    I64,
    U64,
    F32,
    F64,
}

impl Scalar {
    pub fn from_ply(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    pub fn from_pcd(kind: &str, size: usize) -> Option<Self> {
        Some(match (kind, size) {
            ("I", 1) => Self::I8,
            ("U", 1) => Self::U8,
            ("I", 2) => Self::I16,
            ("U", 2) => Self::U16,
            ("I", 4) => Self::I32,
            ("U", 4) => Self::U32,
            ("I", 8) => Self::I64,
            ("U", 8) => Self::U64,
            ("F", 4) => Self::F32,
            ("F", 8) => Self::F64,
            _ => return None,
        })
    }

    pub fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::I64 | Self::U64 | Self::F64 => 8,
        }
    }

    /// Decodes one little-endian value; `b` must hold at least `size()` bytes.
    pub fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::I64 => i64::from_le_bytes(b[..8].try_into().unwrap()) as f64,
            Self::U64 => u64::from_le_bytes(b[..8].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    /// Parses a text token at the declared precision, so a float32 field
    /// yields exactly the value a binary file would.
    pub fn parse_text(self, tok: &str) -> Option<f64> {
        match self {
            Self::F32 => tok.parse::<f32>().ok().map(f64::from),
            Self::F64 => tok.parse::<f64>().ok(),
            Self::I8 | Self::I16 | Self::I32 | Self::I64 => tok.parse::<i64>().ok().map(|v| v as f64),
            Self::U8 | Self::U16 | Self::U32 | Self::U64 => tok.parse::<u64>().ok().map(|v| v as f64),
        }
    }
}

/// Interprets a decoded value as a label; rejects negatives and fractions.
pub(crate) fn as_label(v: f64) -> Option<u32> {
    (v >= 0.0 && v <= u32::MAX as f64 && v.fract() == 0.0).then_some(v as u32)
}
