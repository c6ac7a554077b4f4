//! `key_hex,pt_hex,ct_hex` test-vector files.

use std::io::{self, Write};

use super::AesError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestVector {
    pub key: [u8; 16],
    pub pt: [u8; 16],
    pub ct: [u8; 16],
}

pub fn write_vectors<W: Write>(mut w: W, vectors: &[TestVector]) -> io::Result<()> {
    for v in vectors {
        writeln!(w, "{},{},{}", hex::encode(v.key), hex::encode(v.pt), hex::encode(v.ct))?;
    }
    Ok(())
}

fn block(field: &str, line: usize) -> Result<[u8; 16], AesError> {
    let mut out = [0u8; 16];
    if field.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(AesError::Parse { line, reason: "hex must be lowercase".into() });
    }
    hex::decode_to_slice(field, &mut out).map_err(|e| AesError::Parse { line, reason: e.to_string() })?;
    Ok(out)
}

/// Parses a vector file. Blank lines are skipped.
pub fn parse_vectors(text: &str) -> Result<Vec<TestVector>, AesError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [k, p, c] = fields[..] else {
            return Err(AesError::Parse { line: i + 1, reason: format!("expected 3 fields, got {}", fields.len()) });
        };
        out.push(TestVector { key: block(k, i + 1)?, pt: block(p, i + 1)?, ct: block(c, i + 1)? });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let v = TestVector { key: [1; 16], pt: [0xab; 16], ct: [0; 16] };
        let mut buf = Vec::new();
        write_vectors(&mut buf, &[v, v]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("01010101010101010101010101010101,abab"));
        assert_eq!(parse_vectors(&text).unwrap(), vec![v, v]);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(parse_vectors("00,11").is_err());
        let upper = format!("{},{},{}", "AB".repeat(16), "00".repeat(16), "00".repeat(16));
        assert!(parse_vectors(&upper).is_err());
        let short = format!("{},{},{}", "ab".repeat(15), "00".repeat(16), "00".repeat(16));
        assert!(matches!(parse_vectors(&short), Err(AesError::Parse { line: 1, .. })));
    }
}
