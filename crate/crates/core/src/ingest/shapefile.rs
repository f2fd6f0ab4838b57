//! Reader and writer for the ESRI shapefile main file (`.shp`), polygon and
//! null shape types only.
//!
//! Layout: a 100-byte header (file code and length big-endian, the rest
//! little-endian) followed by records, each an 8-byte big-endian header
//! (record number, content length in 16-bit words) and its content.

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use crate::geometry::{BBox, Polygon, Ring, Vertex};

use super::{IngestError, VectorLayer};

pub const FILE_CODE: i32 = 9994;
pub const VERSION: i32 = 1000;
pub const SHAPE_NULL: i32 = 0;
pub const SHAPE_POLYGON: i32 = 5;

const HEADER_LEN: usize = 100;
const RECORD_HEADER_LEN: usize = 8;
// shape type + box + NumParts + NumPoints
const POLYGON_FIXED_LEN: usize = 4 + 32 + 4 + 4;

/// Parses a complete `.shp` byte stream into a layer tagged with `year`.
///
/// Polygons are returned as stored (rings grouped by the ESRI orientation
/// convention, clockwise = outer); run [`super::fix_layer`] before gridding.
pub fn parse_shapefile(bytes: &[u8], year: i32) -> Result<VectorLayer<f64>, IngestError> {
    if bytes.len() < HEADER_LEN {
        return Err(IngestError::TruncatedHeader { len: bytes.len() });
    }
    let code = BigEndian::read_i32(&bytes[0..4]);
    if code != FILE_CODE {
        return Err(IngestError::BadMagic { found: code });
    }
    let length_words = BigEndian::read_i32(&bytes[24..28]);
    let version = LittleEndian::read_i32(&bytes[28..32]);
    if version != VERSION {
        return Err(IngestError::MalformedRecord { record: 0, reason: format!("version {version}") });
    }
    let shape_type = LittleEndian::read_i32(&bytes[32..36]);
    if shape_type != SHAPE_NULL && shape_type != SHAPE_POLYGON {
        return Err(IngestError::UnsupportedShapeType { shape_type, record: None });
    }
    if length_words < (HEADER_LEN / 2) as i32 {
        return Err(IngestError::MalformedRecord { record: 0, reason: format!("file length {length_words} words") });
    }
    let declared_end = length_words as usize * 2;

    let mut polygons = Vec::new();
    let mut offset = HEADER_LEN;
    let mut previous = 0i32;
    while offset < declared_end {
        if offset + RECORD_HEADER_LEN > bytes.len() || offset + RECORD_HEADER_LEN > declared_end {
            return Err(IngestError::TruncatedRecord { record: previous + 1, offset });
        }
        let number = BigEndian::read_i32(&bytes[offset..offset + 4]);
        let content_words = BigEndian::read_i32(&bytes[offset + 4..offset + 8]);
        if number <= previous {
            return Err(IngestError::NonMonotoneRecordNumbers { previous, found: number });
        }
        if content_words < 2 {
            return Err(IngestError::MalformedRecord { record: number, reason: format!("content length {content_words}") });
        }
        let start = offset + RECORD_HEADER_LEN;
        let end = start + content_words as usize * 2;
        if end > bytes.len() || end > declared_end {
            return Err(IngestError::TruncatedRecord { record: number, offset: bytes.len().min(declared_end) });
        }
        let content = &bytes[start..end];
        match LittleEndian::read_i32(&content[0..4]) {
            SHAPE_NULL => {}
            SHAPE_POLYGON => polygons.extend(read_polygon_record(number, content)?),
            other => return Err(IngestError::UnsupportedShapeType { shape_type: other, record: Some(number) }),
        }
        previous = number;
        offset = end;
    }
    Ok(VectorLayer::new(year, polygons))
}

fn read_polygon_record(record: i32, content: &[u8]) -> Result<Vec<Polygon<f64>>, IngestError> {
    let malformed = |reason: String| IngestError::MalformedRecord { record, reason };
    if content.len() < POLYGON_FIXED_LEN {
        return Err(malformed(format!("{} content bytes", content.len())));
    }
    let num_parts = LittleEndian::read_i32(&content[36..40]);
    let num_points = LittleEndian::read_i32(&content[40..44]);
    if num_parts < 0 || num_points < 0 || (num_points > 0 && num_parts == 0) {
        return Err(malformed(format!("{num_parts} parts, {num_points} points")));
    }
    let (num_parts, num_points) = (num_parts as usize, num_points as usize);
    let needed = num_parts
        .checked_mul(4)
        .and_then(|p| num_points.checked_mul(16).and_then(|q| p.checked_add(q)))
        .and_then(|v| v.checked_add(POLYGON_FIXED_LEN));
    match needed {
        Some(n) if n <= content.len() => {}
        _ => return Err(malformed(format!("{num_parts} parts and {num_points} points exceed content length"))),
    }

    let parts_at = POLYGON_FIXED_LEN;
    let points_at = parts_at + 4 * num_parts;
    let mut starts = Vec::with_capacity(num_parts + 1);
    for i in 0..num_parts {
        let s = LittleEndian::read_i32(&content[parts_at + 4 * i..parts_at + 4 * i + 4]);
        let valid = s >= 0 && (s as usize) < num_points.max(1) && starts.last().is_none_or(|&p| (s as usize) > p);
        if !valid || (i == 0 && s != 0) {
            return Err(malformed(format!("part start {s}")));
        }
        starts.push(s as usize);
    }
    starts.push(num_points);

    let mut rings = Vec::with_capacity(num_parts);
    for w in starts.windows(2) {
        let mut vertices = Vec::with_capacity(w[1] - w[0]);
        for k in w[0]..w[1] {
            let at = points_at + 16 * k;
            let v = Vertex::new(LittleEndian::read_f64(&content[at..at + 8]), LittleEndian::read_f64(&content[at + 8..at + 16]));
            if !v.is_valid_lonlat() {
                return Err(IngestError::InvalidCoordinate { record, lon: v.lon, lat: v.lat });
            }
            vertices.push(v);
        }
        rings.push(Ring::new(vertices));
    }
    Ok(assemble_rings(rings))
}

/// Groups rings into polygons: clockwise rings open a polygon, the rest
/// become holes of the outer ring that contains them.
fn assemble_rings(rings: Vec<Ring<f64>>) -> Vec<Polygon<f64>> {
    let mut polys: Vec<Polygon<f64>> = Vec::new();
    let mut holes = Vec::new();
    for ring in rings {
        if ring.signed_area() <= 0.0 {
            polys.push(Polygon::new(ring, Vec::new()));
        } else {
            holes.push((polys.len(), ring));
        }
    }
    for (preceding, hole) in holes {
        let probe = hole.vertices()[0];
        let owner = polys
            .iter()
            .rposition(|p| p.outer.contains_point(probe))
            .or(preceding.checked_sub(1));
        match owner {
            Some(i) => polys[i].holes.push(hole),
            // counter-clockwise ring with no outer: a writer that ignored the convention
            None => polys.push(Polygon::new(hole, Vec::new())),
        }
    }
    polys
}

/// Serializes polygons as a polygon shapefile, one record per polygon,
/// outer rings clockwise and holes counter-clockwise.
pub fn write_shapefile(polygons: &[Polygon<f64>]) -> Vec<u8> {
    let bbox = polygons.iter().fold(BBox::empty(), |b, p| b.union(&p.bbox()));
    let mut body = Vec::new();
    for (i, p) in polygons.iter().enumerate() {
        let rings: Vec<Ring<f64>> = p
            .rings()
            .enumerate()
            .map(|(k, r)| {
                let want_cw = k == 0;
                if (r.signed_area() < 0.0) == want_cw { r.clone() } else { r.reversed() }
            })
            .collect();
        let num_points: usize = rings.iter().map(Ring::len).sum();
        let content_len = POLYGON_FIXED_LEN + 4 * rings.len() + 16 * num_points;
        let mut rec = vec![0u8; RECORD_HEADER_LEN + content_len];
        BigEndian::write_i32(&mut rec[0..4], i as i32 + 1);
        BigEndian::write_i32(&mut rec[4..8], (content_len / 2) as i32);
        let c = &mut rec[RECORD_HEADER_LEN..];
        LittleEndian::write_i32(&mut c[0..4], SHAPE_POLYGON);
        let pb = p.bbox();
        for (k, v) in [pb.min_lon, pb.min_lat, pb.max_lon, pb.max_lat].iter().enumerate() {
            LittleEndian::write_f64(&mut c[4 + 8 * k..12 + 8 * k], *v);
        }
        LittleEndian::write_i32(&mut c[36..40], rings.len() as i32);
        LittleEndian::write_i32(&mut c[40..44], num_points as i32);
        let mut start = 0;
        let mut at = POLYGON_FIXED_LEN + 4 * rings.len();
        for (k, r) in rings.iter().enumerate() {
            LittleEndian::write_i32(&mut c[POLYGON_FIXED_LEN + 4 * k..POLYGON_FIXED_LEN + 4 * k + 4], start as i32);
            start += r.len();
            for v in r.vertices() {
                LittleEndian::write_f64(&mut c[at..at + 8], v.lon);
                LittleEndian::write_f64(&mut c[at + 8..at + 16], v.lat);
                at += 16;
            }
        }
        body.extend_from_slice(&rec);
    }

    let mut out = vec![0u8; HEADER_LEN];
    BigEndian::write_i32(&mut out[0..4], FILE_CODE);
    BigEndian::write_i32(&mut out[24..28], ((HEADER_LEN + body.len()) / 2) as i32);
    LittleEndian::write_i32(&mut out[28..32], VERSION);
    LittleEndian::write_i32(&mut out[32..36], SHAPE_POLYGON);
    let hb = if bbox.is_empty() { [0.0; 4] } else { [bbox.min_lon, bbox.min_lat, bbox.max_lon, bbox.max_lat] };
    for (k, v) in hb.iter().enumerate() {
        LittleEndian::write_f64(&mut out[36 + 8 * k..44 + 8 * k], *v);
    }
    out.extend_from_slice(&body);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_only() -> Vec<u8> {
        write_shapefile(&[])
    }

    #[test]
    fn header_only_file_is_empty_layer() {
        let bytes = header_only();
        assert_eq!(bytes.len(), 100);
        assert_eq!(BigEndian::read_i32(&bytes[24..28]), 50);
        let layer = parse_shapefile(&bytes, 1996).unwrap();
        assert!(layer.polygons.is_empty());
    }

    #[test]
    fn zeroed_magic_is_rejected() {
        let mut bytes = header_only();
        bytes[0..4].copy_from_slice(&[0, 0, 0, 0]);
        assert_eq!(parse_shapefile(&bytes, 1996), Err(IngestError::BadMagic { found: 0 }));
    }

    #[test]
    fn non_monotone_record_numbers() {
        let sq = Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let mut bytes = write_shapefile(&[sq.clone(), sq]);
        let second = 100 + 8 + BigEndian::read_i32(&bytes[104..108]) as usize * 2;
        BigEndian::write_i32(&mut bytes[second..second + 4], 1);
        assert_eq!(parse_shapefile(&bytes, 2010), Err(IngestError::NonMonotoneRecordNumbers { previous: 1, found: 1 }));
    }

    #[test]
    fn unsupported_record_type() {
        let sq = Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let mut bytes = write_shapefile(&[sq]);
        LittleEndian::write_i32(&mut bytes[108..112], 3);
        assert_eq!(
            parse_shapefile(&bytes, 2010),
            Err(IngestError::UnsupportedShapeType { shape_type: 3, record: Some(1) })
        );
    }

    #[test]
    fn null_records_are_skipped() {
        let mut bytes = header_only();
        let mut rec = vec![0u8; 12];
        BigEndian::write_i32(&mut rec[0..4], 1);
        BigEndian::write_i32(&mut rec[4..8], 2);
        bytes.extend_from_slice(&rec);
        BigEndian::write_i32(&mut bytes[24..28], 56);
        assert!(parse_shapefile(&bytes, 2015).unwrap().polygons.is_empty());
    }

    #[test]
    fn holes_attach_to_containing_outer() {
        let outer = Ring::from_coords(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)]);
        let hole = Ring::from_coords(&[(1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0)]);
        let p = Polygon::new(outer, vec![hole]);
        let layer = parse_shapefile(&write_shapefile(&[p]), 2009).unwrap();
        assert_eq!(layer.polygons.len(), 1);
        assert_eq!(layer.polygons[0].holes.len(), 1);
        assert_eq!(layer.polygons[0].area(), 15.0);
    }
}
