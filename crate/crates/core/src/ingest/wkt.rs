use crate::geometry::{Polygon, Ring, Vertex};
use crate::scalar::Real;

use super::IngestError;

/// Parses `POLYGON` or `MULTIPOLYGON` well-known text.
///
/// The first ring of each polygon is the outer ring, the rest are holes.
/// Unclosed rings are closed; vertex order is kept as written.
pub fn parse_wkt<T: Real>(text: &str) -> Result<Vec<Polygon<T>>, IngestError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    p.skip_ws();
    let keyword = p.keyword();
    let polys = match keyword.to_ascii_uppercase().as_str() {
        "POLYGON" => {
            p.skip_ws();
            if p.try_keyword("EMPTY") {
                Vec::new()
            } else {
                vec![p.polygon_body()?]
            }
        }
        "MULTIPOLYGON" => {
            p.skip_ws();
            if p.try_keyword("EMPTY") {
                Vec::new()
            } else {
                let mut v = Vec::new();
                p.expect(b'(')?;
                loop {
                    v.push(p.polygon_body()?);
                    if !p.list_continues()? {
                        break;
                    }
                }
                v
            }
        }
        "" => return Err(p.err("expected POLYGON or MULTIPOLYGON")),
        other => return Err(p.err(&format!("unsupported geometry type {other}"))),
    };
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing characters"));
    }
    Ok(polys)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> IngestError {
        IngestError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn keyword(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn try_keyword(&mut self, kw: &str) -> bool {
        let save = self.pos;
        if self.keyword().eq_ignore_ascii_case(kw) {
            true
        } else {
            self.pos = save;
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), IngestError> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    /// After a list element: `,` continues, `)` ends.
    fn list_continues(&mut self) -> Result<bool, IngestError> {
        self.skip_ws();
        match self.src.get(self.pos) {
            Some(b',') => {
                self.pos += 1;
                Ok(true)
            }
            Some(b')') => {
                self.pos += 1;
                Ok(false)
            }
            _ => Err(self.err("expected ',' or ')'")),
        }
    }

    fn number<T: Real>(&mut self) -> Result<T, IngestError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && matches!(self.src[self.pos], b'0'..=b'9' | b'+' | b'-' | b'.' | b'e' | b'E') {
            self.pos += 1;
        }
        let tok = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if tok.is_empty() {
            return Err(self.err("expected a number"));
        }
        tok.parse::<T>().map_err(|_| IngestError::Syntax { offset: start, message: format!("bad number {tok:?}") })
    }

    fn ring<T: Real>(&mut self) -> Result<Ring<T>, IngestError> {
        self.skip_ws();
        let offset = self.pos;
        self.expect(b'(')?;
        let mut vertices = Vec::new();
        loop {
            let lon = self.number::<T>()?;
            let lat = self.number::<T>()?;
            vertices.push(Vertex::new(lon, lat));
            if !self.list_continues()? {
                break;
            }
        }
        let mut distinct = vertices.clone();
        distinct.dedup();
        while distinct.len() > 1 && distinct.first() == distinct.last() {
            distinct.pop();
        }
        if distinct.len() < 3 {
            return Err(IngestError::EmptyRing { offset });
        }
        Ok(Ring::new(vertices))
    }

    fn polygon_body<T: Real>(&mut self) -> Result<Polygon<T>, IngestError> {
        self.expect(b'(')?;
        let outer = self.ring()?;
        let mut holes = Vec::new();
        while self.list_continues()? {
            holes.push(self.ring()?);
        }
        Ok(Polygon::new(outer, holes))
    }
}
