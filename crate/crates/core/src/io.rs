//! File formats: voxel grids (UDFG, SGNF, LBLF), point clouds (XYZ, XYZN, PLY)
//! and labeled meshes (OBJ, PLY).
//!
//! The three grid formats share one little-endian header: a 4-byte magic, u32
//! version 1, u32 dims[3] and f64 bbox[6] (min xyz, then max xyz). Payloads are
//! stored x-fastest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::extraction::LabeledMesh;
use crate::fields::{GridField, GridSpec};
use crate::geom::{v3, Aabb, Vec3};
use crate::labeling::LabelField;
use crate::sampling::OrientedPointCloud;
use crate::signfield::SignField;

pub const GRID_VERSION: u32 = 1;
/// Bytes before the payload of every grid file.
pub const GRID_HEADER_LEN: usize = 4 + 4 + 12 + 48;

const MASK_OMEGA1: u8 = 1;
const MASK_OMEGA2: u8 = 2;
const MASK_EMPTY: u8 = 4;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn write_header(w: &mut impl Write, magic: &[u8; 4], spec: &GridSpec) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&GRID_VERSION.to_le_bytes())?;
    for d in spec.dims {
        let d = u32::try_from(d).map_err(|_| Error::InvalidSpec(format!("dimension {d} does not fit in u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for c in spec.bbox.min.iter().chain(spec.bbox.max.iter()) {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read, what: &'static str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(what, "truncated file"),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_header(r: &mut impl Read, magic: &'static str) -> Result<GridSpec> {
    let m: [u8; 4] = read_exact(r, magic)?;
    if &m != magic.as_bytes() {
        return Err(Error::format(magic, format!("bad magic {:?}", String::from_utf8_lossy(&m))));
    }
    let version = u32::from_le_bytes(read_exact(r, magic)?);
    if version != GRID_VERSION {
        return Err(Error::format(magic, format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = u32::from_le_bytes(read_exact(r, magic)?) as usize;
    }
    let mut b = [0f64; 6];
    for c in &mut b {
        *c = f64::from_le_bytes(read_exact(r, magic)?);
    }
    let bbox = Aabb::new(v3(b[0], b[1], b[2]), v3(b[3], b[4], b[5]));
    GridSpec::new(dims, bbox).map_err(|e| Error::format(magic, e.to_string()))
}

/// Read `n` fixed-size little-endian records and reject trailing bytes.
fn read_payload<const N: usize, T>(
    r: &mut impl Read,
    n: usize,
    magic: &'static str,
    decode: impl Fn([u8; N]) -> T,
) -> Result<Vec<T>> {
    let mut bytes = Vec::new();
    r.take((n * N + 1) as u64).read_to_end(&mut bytes)?;
    if bytes.len() != n * N {
        let why = if bytes.len() < n * N { "truncated payload" } else { "trailing bytes after payload" };
        return Err(Error::format(magic, why));
    }
    Ok(bytes
        .chunks_exact(N)
        .map(|c| decode(c.try_into().expect("chunk size")))
        .collect())
}

pub fn write_udfg(w: &mut impl Write, grid: &GridField) -> Result<()> {
    write_header(w, b"UDFG", grid.spec())?;
    for &v in grid.values() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_udfg(r: &mut impl Read) -> Result<GridField> {
    let spec = read_header(r, "UDFG")?;
    let values = read_payload(r, spec.len(), "UDFG", |b: [u8; 4]| f32::from_le_bytes(b) as f64)?;
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::format("UDFG", "distances must be finite and non-negative"));
    }
    GridField::new(spec, values)
}

pub fn save_udfg(path: impl AsRef<Path>, grid: &GridField) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_udfg(&mut w, grid)?;
    Ok(w.flush()?)
}

pub fn load_udfg(path: impl AsRef<Path>) -> Result<GridField> {
    read_udfg(&mut open(path.as_ref())?)
}

/// Side values as f32, then one mask byte per voxel (bit 0 omega1, bit 1
/// omega2, bit 2 empty neighborhood).
pub fn write_sgnf(w: &mut impl Write, sf: &SignField) -> Result<()> {
    write_header(w, b"SGNF", &sf.spec)?;
    for &v in &sf.w {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    let masks: Vec<u8> = (0..sf.spec.len())
        .map(|i| {
            (sf.inside_omega1[i] as u8) * MASK_OMEGA1
                | (sf.inside_omega2[i] as u8) * MASK_OMEGA2
                | (sf.empty[i] as u8) * MASK_EMPTY
        })
        .collect();
    w.write_all(&masks)?;
    Ok(())
}

pub fn read_sgnf(r: &mut impl Read) -> Result<SignField> {
    let spec = read_header(r, "SGNF")?;
    let n = spec.len();
    let mut w = Vec::new();
    let mut masks = Vec::new();
    let all = read_payload(r, n * 5, "SGNF", |b: [u8; 1]| b[0])?;
    for c in all[..n * 4].chunks_exact(4) {
        w.push(f32::from_le_bytes(c.try_into().expect("chunk size")) as f64);
    }
    masks.extend_from_slice(&all[n * 4..]);
    if masks.iter().any(|m| m & !(MASK_OMEGA1 | MASK_OMEGA2 | MASK_EMPTY) != 0) {
        return Err(Error::format("SGNF", "unknown mask bits"));
    }
    Ok(SignField {
        spec,
        w,
        inside_omega1: masks.iter().map(|m| m & MASK_OMEGA1 != 0).collect(),
        inside_omega2: masks.iter().map(|m| m & MASK_OMEGA2 != 0).collect(),
        empty: masks.iter().map(|m| m & MASK_EMPTY != 0).collect(),
    })
}

pub fn save_sgnf(path: impl AsRef<Path>, sf: &SignField) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_sgnf(&mut w, sf)?;
    Ok(w.flush()?)
}

pub fn load_sgnf(path: impl AsRef<Path>) -> Result<SignField> {
    read_sgnf(&mut open(path.as_ref())?)
}

pub fn write_lblf(w: &mut impl Write, lf: &LabelField) -> Result<()> {
    write_header(w, b"LBLF", &lf.spec)?;
    for &l in &lf.labels {
        w.write_all(&l.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_lblf(r: &mut impl Read) -> Result<LabelField> {
    let spec = read_header(r, "LBLF")?;
    let labels = read_payload(r, spec.len(), "LBLF", u32::from_le_bytes)?;
    Ok(LabelField::new(spec, labels))
}

pub fn save_lblf(path: impl AsRef<Path>, lf: &LabelField) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_lblf(&mut w, lf)?;
    Ok(w.flush()?)
}

pub fn load_lblf(path: impl AsRef<Path>) -> Result<LabelField> {
    read_lblf(&mut open(path.as_ref())?)
}

/// Points with optional per-point normals, as read from a cloud file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointData {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointData {
    /// Oriented cloud when normals were present.
    pub fn oriented(&self) -> Option<Result<OrientedPointCloud>> {
        self.normals
            .as_ref()
            .map(|n| OrientedPointCloud::new(self.points.clone(), n.clone()))
    }
}

pub fn write_xyz(w: &mut impl Write, points: &[Vec3]) -> Result<()> {
    for p in points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn write_xyzn(w: &mut impl Write, cloud: &OrientedPointCloud) -> Result<()> {
    for (p, n) in cloud.points.iter().zip(&cloud.normals) {
        writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)?;
    }
    Ok(())
}

/// Parse XYZ or XYZN text. The column count of the first data line decides the
/// flavor; blank lines and `#` comments are skipped.
pub fn read_xyz(r: impl BufRead) -> Result<PointData> {
    let mut out = PointData::default();
    let mut cols = None;
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = t
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format("XYZ", format!("line {}: {e}", no + 1)))?;
        let n = *cols.get_or_insert(vals.len());
        if vals.len() != n || (n != 3 && n != 6) {
            return Err(Error::format("XYZ", format!("line {}: expected 3 or 6 columns consistently", no + 1)));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("XYZ", format!("line {}: non-finite value", no + 1)));
        }
        out.points.push(v3(vals[0], vals[1], vals[2]));
        if n == 6 {
            out.normals.get_or_insert_with(Vec::new).push(v3(vals[3], vals[4], vals[5]));
        }
    }
    Ok(out)
}

/// Read a point cloud from `.xyz`, `.xyzn` or `.ply`, chosen by extension.
pub fn load_points(path: impl AsRef<Path>) -> Result<PointData> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "ply" => {
            let ply = read_ply(&mut open(path)?)?;
            Ok(PointData {
                points: ply.vertices,
                normals: ply.normals,
            })
        }
        "xyz" | "xyzn" | "txt" => read_xyz(open(path)?),
        other => Err(Error::format("point cloud", format!("unsupported extension `{other}`"))),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// One OBJ group `mat_<a>_<b>` per label pair, groups in increasing pair order.
/// Coordinates use the shortest exact decimal form, so output is reproducible
/// bit for bit.
pub fn write_obj(w: &mut impl Write, mesh: &LabeledMesh) -> Result<()> {
    for p in &mesh.vertices {
        writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
    }
    let mut order: Vec<usize> = (0..mesh.faces.len()).collect();
    order.sort_by_key(|&f| mesh.face_labels[f]);
    let mut current = None;
    for f in order {
        let pair = mesh.face_labels[f];
        if current != Some(pair) {
            writeln!(w, "g mat_{}_{}", pair.0, pair.1)?;
            current = Some(pair);
        }
        let [a, b, c] = mesh.faces[f];
        writeln!(w, "f {} {} {}", a + 1, b + 1, c + 1)?;
    }
    Ok(())
}

pub fn save_obj(path: impl AsRef<Path>, mesh: &LabeledMesh) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_obj(&mut w, mesh)?;
    Ok(w.flush()?)
}

fn parse_group(name: &str) -> Option<(u32, u32)> {
    let rest = name.strip_prefix("mat_")?;
    let (a, b) = rest.split_once('_')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// Read vertices and faces of an OBJ file. Polygons are fanned; faces outside a
/// `mat_<a>_<b>` group get labels (0, 0).
pub fn read_obj(r: impl BufRead) -> Result<LabeledMesh> {
    let mut mesh = LabeledMesh::default();
    let mut labels = (0, 0);
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        let err = |msg: &str| Error::format("OBJ", format!("line {}: {msg}", no + 1));
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err("bad vertex"))?;
                if c.len() != 3 {
                    return Err(err("vertex needs three coordinates"));
                }
                mesh.vertices.push(v3(c[0], c[1], c[2]));
            }
            Some("g") => labels = it.next().and_then(parse_group).unwrap_or((0, 0)),
            Some("f") => {
                let n = mesh.vertices.len() as i64;
                let idx: Vec<u32> = it
                    .map(|tok| {
                        let i: i64 = tok.split('/').next().unwrap_or("").parse().map_err(|_| err("bad face index"))?;
                        let i = if i < 0 { n + i } else { i - 1 };
                        if i < 0 || i >= n {
                            return Err(err("face index out of range"));
                        }
                        Ok(i as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(err("face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    mesh.faces.push([idx[0], idx[k], idx[k + 1]]);
                    mesh.face_labels.push(labels);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<LabeledMesh> {
    read_obj(open(path.as_ref())?)
}

/// Load a mesh from `.obj` or `.ply`.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<LabeledMesh> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "obj" => load_obj(path),
        "ply" => read_ply(&mut open(path)?)?.into_mesh(),
        other => Err(Error::format("mesh", format!("unsupported extension `{other}`"))),
    }
}

/// Binary little-endian PLY with per-face `label_a` and `label_b`.
pub fn write_ply(w: &mut impl Write, mesh: &LabeledMesh) -> Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nproperty int label_a\nproperty int label_b\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )?;
    for p in &mesh.vertices {
        for c in p.iter() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for (f, &(a, b)) in mesh.faces.iter().zip(&mesh.face_labels) {
        w.write_all(&[3u8])?;
        for &i in f {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
        w.write_all(&(a as i32).to_le_bytes())?;
        w.write_all(&(b as i32).to_le_bytes())?;
    }
    Ok(())
}

pub fn save_ply(path: impl AsRef<Path>, mesh: &LabeledMesh) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_ply(&mut w, mesh)?;
    Ok(w.flush()?)
}

/// Contents of a PLY file restricted to what the pipeline uses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub faces: Vec<Vec<u32>>,
    pub face_labels: Option<Vec<(u32, u32)>>,
}

impl PlyData {
    pub fn into_mesh(self) -> Result<LabeledMesh> {
        let mut mesh = LabeledMesh {
            vertices: self.vertices,
            ..Default::default()
        };
        for (i, f) in self.faces.iter().enumerate() {
            if f.len() < 3 || f.iter().any(|&v| v as usize >= mesh.vertices.len()) {
                return Err(Error::format("PLY", format!("face {i} is invalid")));
            }
            let l = self.face_labels.as_ref().map_or((0, 0), |l| l[i]);
            for k in 1..f.len() - 1 {
                mesh.faces.push([f[0], f[k], f[k + 1]]);
                mesh.face_labels.push(l);
            }
        }
        Ok(mesh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::format("PLY", format!("unknown property type `{other}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Source of property values for either encoding.
trait PlyValues {
    fn next(&mut self, ty: Scalar) -> Result<f64>;
}

struct AsciiValues<R: BufRead> {
    reader: R,
    tokens: std::vec::IntoIter<String>,
}

impl<R: BufRead> PlyValues for AsciiValues<R> {
    fn next(&mut self, _ty: Scalar) -> Result<f64> {
        loop {
            if let Some(t) = self.tokens.next() {
                return t.parse().map_err(|_| Error::format("PLY", format!("bad value `{t}`")));
            }
            let mut line = String::new();
            if self.reader.read_line(&mut line)? == 0 {
                return Err(Error::format("PLY", "unexpected end of data"));
            }
            self.tokens = line.split_whitespace().map(str::to_owned).collect::<Vec<_>>().into_iter();
        }
    }
}

struct BinaryValues<R: Read> {
    reader: R,
}

impl<R: Read> PlyValues for BinaryValues<R> {
    fn next(&mut self, ty: Scalar) -> Result<f64> {
        let mut b = [0u8; 8];
        let n = ty.size();
        self.reader.read_exact(&mut b[..n]).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format("PLY", "unexpected end of data"),
            _ => Error::Io(e),
        })?;
        Ok(ty.decode(&b[..n]))
    }
}

/// Read an ASCII or binary little-endian PLY file. Vertex positions and
/// normals, face index lists and `label_a`/`label_b` are kept; everything else
/// is skipped.
pub fn read_ply<R: BufRead>(r: &mut R) -> Result<PlyData> {
    let mut line = String::new();
    let next_line = |r: &mut R, line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(Error::format("PLY", "header ended early"));
        }
        Ok(())
    };
    next_line(r, &mut line)?;
    if line.trim() != "ply" {
        return Err(Error::format("PLY", "missing `ply` magic"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(r, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, ..] => return Err(Error::format("PLY", format!("unsupported format `{other}`"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::format("PLY", "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, t, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("PLY", "property before element"))?
                .props
                .push(Property::List(name.to_string(), Scalar::parse(c)?, Scalar::parse(t)?)),
            ["property", t, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("PLY", "property before element"))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(t)?)),
            ["end_header"] => break,
            _ => {}
        }
    }
    let binary = binary.ok_or_else(|| Error::format("PLY", "missing format line"))?;
    if binary {
        parse_ply_body(&elements, &mut BinaryValues { reader: r })
    } else {
        parse_ply_body(
            &elements,
            &mut AsciiValues {
                reader: r,
                tokens: Vec::new().into_iter(),
            },
        )
    }
}

fn parse_ply_body(elements: &[Element], src: &mut impl PlyValues) -> Result<PlyData> {
    let mut out = PlyData::default();
    for el in elements {
        let names: Vec<&str> = el
            .props
            .iter()
            .map(|p| match p {
                Property::Scalar(n, _) | Property::List(n, _, _) => n.as_str(),
            })
            .collect();
        let has = |n: &str| names.contains(&n);
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex && !(has("x") && has("y") && has("z")) {
            return Err(Error::format("PLY", "vertex element lacks x, y or z"));
        }
        let with_normals = is_vertex && has("nx") && has("ny") && has("nz");
        let with_labels = is_face && has("label_a") && has("label_b");
        if with_normals {
            out.normals = Some(Vec::with_capacity(el.count));
        }
        if with_labels {
            out.face_labels = Some(Vec::with_capacity(el.count));
        }
        for _ in 0..el.count {
            let mut p = Vec3::zeros();
            let mut n = Vec3::zeros();
            let mut labels = (0u32, 0u32);
            let mut list = Vec::new();
            for prop in &el.props {
                match prop {
                    Property::Scalar(name, ty) => {
                        let v = src.next(*ty)?;
                        match name.as_str() {
                            "x" => p.x = v,
                            "y" => p.y = v,
                            "z" => p.z = v,
                            "nx" => n.x = v,
                            "ny" => n.y = v,
                            "nz" => n.z = v,
                            "label_a" => labels.0 = v as u32,
                            "label_b" => labels.1 = v as u32,
                            _ => {}
                        }
                    }
                    Property::List(name, cty, ty) => {
                        let len = src.next(*cty)?;
                        if !(0.0..=1e6).contains(&len) {
                            return Err(Error::format("PLY", "bad list length"));
                        }
                        let keep = is_face && (name == "vertex_indices" || name == "vertex_index");
                        for _ in 0..len as usize {
                            let v = src.next(*ty)?;
                            if keep {
                                if v < 0.0 {
                                    return Err(Error::format("PLY", "negative vertex index"));
                                }
                                list.push(v as u32);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                if !p.iter().all(|c| c.is_finite()) {
                    return Err(Error::format("PLY", "non-finite vertex"));
                }
                out.vertices.push(p);
                if let Some(ns) = &mut out.normals {
                    ns.push(n);
                }
            } else if is_face {
                out.faces.push(list);
                if let Some(ls) = &mut out.face_labels {
                    ls.push(labels);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{fixtures, sample_grid, ScalarField};

    fn tri_mesh() -> LabeledMesh {
        LabeledMesh {
            vertices: vec![v3(0.0, 0.0, 0.0), v3(1.0, 0.0, 0.0), v3(0.0, 1.0, 0.0), v3(0.1, 0.2, 1.0 / 3.0)],
            faces: vec![[0, 1, 2], [0, 1, 3], [1, 2, 3]],
            face_labels: vec![(2, 3), (1, 2), (2, 3)],
        }
    }

    #[test]
    fn udfg_size_and_round_trip() {
        let f = ScalarField::from(fixtures::sphere(0.4));
        let g = sample_grid(&f, &GridSpec::cubic(8).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_udfg(&mut buf, &g).unwrap();
        assert_eq!(buf.len(), GRID_HEADER_LEN + 8 * 8 * 8 * 4);
        assert_eq!(&buf[..4], b"UDFG");
        let back = read_udfg(&mut buf.as_slice()).unwrap();
        assert_eq!(back.spec(), g.spec());
        for (a, b) in back.values().iter().zip(g.values()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let mut again = Vec::new();
        write_udfg(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn udfg_rejects_damage() {
        let g = GridField::new(GridSpec::cubic(2).unwrap(), vec![0.5; 8]).unwrap();
        let mut buf = Vec::new();
        write_udfg(&mut buf, &g).unwrap();
        assert!(matches!(read_udfg(&mut &buf[..buf.len() - 1]), Err(Error::Format { .. })));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_udfg(&mut long.as_slice()), Err(Error::Format { .. })));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_udfg(&mut bad.as_slice()), Err(Error::Format { .. })));
        let mut neg = buf.clone();
        let n = neg.len();
        neg[n - 4..].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(read_udfg(&mut neg.as_slice()).is_err());
    }

    #[test]
    fn sign_and_label_dumps_round_trip() {
        let spec = GridSpec::cubic(3).unwrap();
        let n = spec.len();
        let sf = SignField {
            spec,
            w: (0..n).map(|i| i as f64 - 13.0).collect(),
            inside_omega1: (0..n).map(|i| i % 2 == 0).collect(),
            inside_omega2: (0..n).map(|i| i % 4 == 0).collect(),
            empty: (0..n).map(|i| i == 2).collect(),
        };
        let mut buf = Vec::new();
        write_sgnf(&mut buf, &sf).unwrap();
        assert_eq!(buf.len(), GRID_HEADER_LEN + n * 5);
        assert_eq!(read_sgnf(&mut buf.as_slice()).unwrap(), sf);

        let lf = LabelField::new(spec, (0..n as u32).map(|i| i % 5).collect());
        let mut buf = Vec::new();
        write_lblf(&mut buf, &lf).unwrap();
        assert_eq!(read_lblf(&mut buf.as_slice()).unwrap(), lf);
        assert!(read_udfg(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn xyz_flavors() {
        let pd = read_xyz("# c\n0 0 1\n\n1 2 3\n".as_bytes()).unwrap();
        assert_eq!(pd.points, vec![v3(0.0, 0.0, 1.0), v3(1.0, 2.0, 3.0)]);
        assert!(pd.normals.is_none());
        let cloud = OrientedPointCloud::new(vec![v3(0.1, 0.2, 0.3)], vec![v3(0.0, 0.0, 1.0)]).unwrap();
        let mut buf = Vec::new();
        write_xyzn(&mut buf, &cloud).unwrap();
        let back = read_xyz(buf.as_slice()).unwrap();
        assert_eq!(back.oriented().unwrap().unwrap(), cloud);
        assert!(read_xyz("0 0 0\n1 1 1 0 0 1\n".as_bytes()).is_err());
        assert!(read_xyz("0 0\n".as_bytes()).is_err());
        assert!(read_xyz("0 0 x\n".as_bytes()).is_err());
    }

    #[test]
    fn obj_groups_and_round_trip() {
        let m = tri_mesh();
        let mut buf = Vec::new();
        write_obj(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.matches("g mat_").count(), 2);
        assert!(text.find("g mat_1_2").unwrap() < text.find("g mat_2_3").unwrap());
        let back = read_obj(buf.as_slice()).unwrap();
        assert_eq!(back.vertices, m.vertices);
        let mut got: Vec<_> = back.faces.iter().zip(&back.face_labels).collect();
        let mut want: Vec<_> = m.faces.iter().zip(&m.face_labels).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn obj_reader_handles_polygons_and_slashes() {
        let m = read_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 -1\n".as_bytes()).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.face_labels, vec![(0, 0); 2]);
        assert!(read_obj("v 0 0 0\nf 1 2 3\n".as_bytes()).is_err());
    }

    #[test]
    fn binary_ply_round_trip() {
        let m = tri_mesh();
        let mut buf = Vec::new();
        write_ply(&mut buf, &m).unwrap();
        let back = read_ply(&mut buf.as_slice()).unwrap().into_mesh().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ascii_ply_cloud() {
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 2\nproperty float x\nproperty float y\n\
                    property float z\nproperty float nx\nproperty float ny\nproperty float nz\nproperty uchar red\n\
                    end_header\n0 0 0 0 0 1 255\n1 0.5 0.25 1 0 0 0\n";
        let pd = read_ply(&mut text.as_bytes()).unwrap();
        assert_eq!(pd.vertices, vec![v3(0.0, 0.0, 0.0), v3(1.0, 0.5, 0.25)]);
        assert_eq!(pd.normals.unwrap()[1], v3(1.0, 0.0, 0.0));
        assert!(read_ply(&mut "ply\nformat binary_big_endian 1.0\nend_header\n".as_bytes()).is_err());
    }
}
