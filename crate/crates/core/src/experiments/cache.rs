//! Text persistence of eigenbases.
//!
//! The first line holds `key=value` pairs separated by spaces. Each further line
//! is one eigenpair, tab-separated: decimal eigenvalue, birth level, graph
//! history, localized descriptor (`-` or `generation:site`), vertex values.
//! Floating-point lists are comma-separated hexadecimal floats, so a round trip
//! is bit-exact. The header checksum is the SHA-256 of everything after the
//! header line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::ARTIFACT_VERSION;
use crate::error::{Error, Result};
use crate::geometry::enumerate_vertices;
use crate::spectral::{
    build_basis_on, BoundaryCondition, EigenBasis, EigenPair, JunctionSite, LocalizedDescriptor,
};

pub const FORMAT_VERSION: u32 = 1;

/// Where [`load_or_build`] obtained its basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Built,
    /// A file existed but described a different level or boundary condition.
    Rebuilt,
}

/// `0x1.8p+1` style rendering of every finite value.
pub fn format_hex(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let fraction = bits & ((1u64 << 52) - 1);
    let (lead, exp) = match (biased, fraction) {
        (0, 0) => return format!("{sign}0x0p+0"),
        (0, _) => (0, -1022),
        _ => (1, biased - 1023),
    };
    let digits = format!("{fraction:013x}");
    let digits = digits.trim_end_matches('0');
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{exp:+}")
    }
}

/// Inverse of [`format_hex`].
pub fn parse_hex(s: &str) -> Option<f64> {
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let value = match body {
        "nan" => f64::NAN,
        "inf" => f64::INFINITY,
        _ => {
            let (mantissa, exp) = body.strip_prefix("0x")?.split_once('p')?;
            let exp: i64 = exp.parse().ok()?;
            let (lead, digits) = mantissa.split_once('.').unwrap_or((mantissa, ""));
            if digits.len() > 13 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
                return None;
            }
            let fraction = if digits.is_empty() {
                0
            } else {
                u64::from_str_radix(&format!("{digits:0<13}"), 16).ok()?
            };
            match lead {
                "1" if (-1022..=1023).contains(&exp) => {
                    f64::from_bits((((exp + 1023) as u64) << 52) | fraction)
                }
                "0" if fraction == 0 && exp == 0 => 0.0,
                "0" if exp == -1022 => f64::from_bits(fraction),
                _ => return None,
            }
        }
    };
    Some(if negative { -value } else { value })
}

fn hex_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| format_hex(v))
        .collect::<Vec<_>>()
        .join(",")
}

fn corrupt(detail: impl Into<String>) -> Error {
    Error::CacheCorrupt(detail.into())
}

fn parse_hex_list(field: &str, what: &str) -> Result<Vec<f64>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|v| parse_hex(v).ok_or_else(|| corrupt(format!("bad {what} value `{v}`"))))
        .collect()
}

fn checksum(payload: &str) -> String {
    Sha256::digest(payload.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// File name used for a level and boundary condition inside a cache directory.
pub fn cache_path(dir: &Path, level: usize, bc: BoundaryCondition) -> PathBuf {
    dir.join(format!("basis-{level}-{bc}.txt"))
}

fn render(basis: &EigenBasis) -> String {
    let mut payload = String::new();
    for p in basis.pairs() {
        let localized = match &p.localized {
            Some(d) => format!("{}:{}", d.generation, d.site),
            None => "-".into(),
        };
        payload.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            p.lambda,
            p.birth_level,
            hex_list(&p.graph_history),
            localized,
            hex_list(&p.values)
        ));
    }
    let header = format!(
        "format_version={FORMAT_VERSION} level={} bc={} count={} ordering_fingerprint={} artifact_version={ARTIFACT_VERSION} checksum={}\n",
        basis.level(),
        basis.bc(),
        basis.len(),
        basis.fingerprint(),
        checksum(&payload)
    );
    header + &payload
}

/// Writes the basis through a temporary file and a rename.
pub fn basis_cache_save(basis: &EigenBasis, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, render(basis))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_header(line: &str) -> Result<BTreeMap<&str, &str>> {
    let fields: BTreeMap<_, _> = line
        .split(' ')
        .filter_map(|kv| kv.split_once('='))
        .collect();
    match fields.get("format_version") {
        None => Err(corrupt("header lacks format_version")),
        Some(v) if *v != FORMAT_VERSION.to_string() => Err(Error::CacheVersion {
            found: v.to_string(),
            expected: FORMAT_VERSION,
        }),
        Some(_) => Ok(fields),
    }
}

fn field<'a>(header: &BTreeMap<&str, &'a str>, key: &str) -> Result<&'a str> {
    header
        .get(key)
        .copied()
        .ok_or_else(|| corrupt(format!("header lacks {key}")))
}

fn header_identity(header: &BTreeMap<&str, &str>) -> Result<(usize, BoundaryCondition)> {
    let level = field(header, "level")?
        .parse()
        .map_err(|_| corrupt("bad level"))?;
    let bc = field(header, "bc")?
        .parse()
        .map_err(|_| corrupt("bad bc"))?;
    Ok((level, bc))
}

fn parse_localized(field: &str) -> Result<Option<LocalizedDescriptor>> {
    if field == "-" {
        return Ok(None);
    }
    let (generation, site) = field
        .split_once(':')
        .ok_or_else(|| corrupt(format!("bad descriptor `{field}`")))?;
    let generation: usize = generation
        .parse()
        .map_err(|_| corrupt(format!("bad generation `{generation}`")))?;
    let digits: Vec<u8> = site.bytes().map(|b| b.wrapping_sub(b'0')).collect();
    let site = match digits[..] {
        [a, b] => JunctionSite::new(a, b).map_err(|_| corrupt(format!("bad site `{site}`")))?,
        _ => return Err(corrupt(format!("bad site `{site}`"))),
    };
    Ok(Some(LocalizedDescriptor {
        generation,
        site,
        cells: site.cell_pair(generation),
    }))
}

fn parse_pair(line: &str, level: usize, bc: BoundaryCondition) -> Result<EigenPair> {
    let parts: Vec<&str> = line.split('\t').collect();
    let [lambda, birth, history, localized, values] = parts[..] else {
        return Err(corrupt(format!("record has {} fields", parts.len())));
    };
    Ok(EigenPair {
        lambda: lambda
            .parse()
            .map_err(|_| corrupt(format!("bad eigenvalue `{lambda}`")))?,
        birth_level: birth
            .parse()
            .map_err(|_| corrupt(format!("bad birth level `{birth}`")))?,
        graph_history: parse_hex_list(history, "history")?,
        bc,
        level,
        values: parse_hex_list(values, "vertex")?,
        localized: parse_localized(localized)?,
    })
}

/// Reads a cache file, verifying version, checksum, record count and fingerprint.
pub fn basis_cache_load(path: &Path) -> Result<EigenBasis> {
    let text = fs::read_to_string(path)?;
    let (head, payload) = text
        .split_once('\n')
        .ok_or_else(|| corrupt("missing header line"))?;
    let header = parse_header(head)?;
    if checksum(payload) != field(&header, "checksum")? {
        return Err(corrupt("checksum mismatch"));
    }
    let (level, bc) = header_identity(&header)?;
    let count: usize = field(&header, "count")?
        .parse()
        .map_err(|_| corrupt("bad count"))?;
    let pairs = payload
        .lines()
        .map(|l| parse_pair(l, level, bc))
        .collect::<Result<Vec<_>>>()?;
    if pairs.len() != count {
        return Err(corrupt(format!(
            "header promises {count} pairs, found {}",
            pairs.len()
        )));
    }
    let basis = EigenBasis::from_pairs(Arc::new(enumerate_vertices(level)?), bc, pairs)
        .map_err(|e| corrupt(e.to_string()))?;
    if basis.fingerprint() != field(&header, "ordering_fingerprint")? {
        return Err(corrupt("fingerprint mismatch"));
    }
    Ok(basis)
}

/// Loads the cached basis for `(level, bc)` from `dir`, building and saving it
/// when absent or when the file describes another level or boundary condition.
pub fn load_or_build(
    dir: &Path,
    level: usize,
    bc: BoundaryCondition,
) -> Result<(EigenBasis, CacheStatus)> {
    let path = cache_path(dir, level, bc);
    let status = match fs::read_to_string(&path) {
        Ok(text) => {
            let head = text.lines().next().unwrap_or_default();
            if header_identity(&parse_header(head)?)? == (level, bc) {
                return Ok((basis_cache_load(&path)?, CacheStatus::Hit));
            }
            CacheStatus::Rebuilt
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => CacheStatus::Built,
        Err(e) => return Err(e.into()),
    };
    let basis = build_basis_on(Arc::new(enumerate_vertices(level)?), bc)?;
    basis_cache_save(&basis, &path)?;
    Ok((basis, status))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::spectral::build_basis;

    fn same(a: &EigenBasis, b: &EigenBasis) -> bool {
        a.len() == b.len()
            && a.pairs().iter().zip(b.pairs()).all(|(p, q)| {
                p.lambda.to_bits() == q.lambda.to_bits()
                    && p.values
                        .iter()
                        .zip(&q.values)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                    && p.graph_history
                        .iter()
                        .zip(&q.graph_history)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                    && p == q
            })
    }

    #[test]
    fn hex_examples() {
        assert_eq!(format_hex(1.0), "0x1p+0");
        assert_eq!(format_hex(-3.0), "-0x1.8p+1");
        assert_eq!(format_hex(0.1), "0x1.999999999999ap-4");
        assert_eq!(format_hex(-0.0), "-0x0p+0");
        assert_eq!(format_hex(f64::MIN_POSITIVE / 4.0), "0x0.4p-1022");
        assert_eq!(parse_hex("0x1.8p+1"), Some(3.0));
        assert!(parse_hex("0x2p+0").is_none());
        assert!(parse_hex("1.5").is_none());
        assert!(parse_hex("0x1.00000000000000p+0").is_none());
        assert!(parse_hex("nan").unwrap().is_nan());
    }

    proptest! {
        #[test]
        fn hex_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            let back = parse_hex(&format_hex(x)).unwrap();
            prop_assert!(back.to_bits() == bits || (x.is_nan() && back.is_nan()));
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let basis = build_basis(3, bc).unwrap();
            let path = cache_path(dir.path(), 3, bc);
            basis_cache_save(&basis, &path).unwrap();
            let back = basis_cache_load(&path).unwrap();
            assert!(same(&basis, &back));
            assert_eq!(back.id(), basis.id());
        }
    }

    #[test]
    fn damage_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let basis = build_basis(2, BoundaryCondition::Dirichlet).unwrap();
        let path = dir.path().join("b.txt");
        basis_cache_save(&basis, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();

        fs::write(&path, &text[..text.len() - 40]).unwrap();
        assert!(matches!(
            basis_cache_load(&path),
            Err(Error::CacheCorrupt(_))
        ));

        let (head, payload) = text.split_once('\n').unwrap();
        fs::write(
            &path,
            format!("{head}\n{}", payload.replacen("p-", "p+", 1)),
        )
        .unwrap();
        assert!(matches!(
            basis_cache_load(&path),
            Err(Error::CacheCorrupt(_))
        ));

        fs::write(
            &path,
            text.replacen("format_version=1", "format_version=9", 1),
        )
        .unwrap();
        assert!(matches!(
            basis_cache_load(&path),
            Err(Error::CacheVersion { .. })
        ));

        fs::write(&path, "").unwrap();
        assert!(matches!(
            basis_cache_load(&path),
            Err(Error::CacheCorrupt(_))
        ));
    }

    #[test]
    fn forged_payload_with_fresh_checksum_fails_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let basis = build_basis(2, BoundaryCondition::Dirichlet).unwrap();
        let path = dir.path().join("b.txt");
        basis_cache_save(&basis, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let (head, payload) = text.split_once('\n').unwrap();
        let lines: Vec<&str> = payload.lines().collect();
        let swapped = format!("{}\n{}\n{}\n", lines[1], lines[0], lines[2..].join("\n"));
        let head = head.replace(&checksum(payload), &checksum(&swapped));
        fs::write(&path, format!("{head}\n{swapped}")).unwrap();
        assert!(
            matches!(basis_cache_load(&path), Err(Error::CacheCorrupt(m)) if m.contains("fingerprint"))
        );
    }

    #[test]
    fn load_or_build_states() {
        let dir = tempfile::tempdir().unwrap();
        let bc = BoundaryCondition::Neumann;
        let (built, status) = load_or_build(dir.path(), 2, bc).unwrap();
        assert_eq!(status, CacheStatus::Built);
        let (hit, status) = load_or_build(dir.path(), 2, bc).unwrap();
        assert_eq!(status, CacheStatus::Hit);
        assert!(same(&built, &hit));

        // A level-3 request must not reuse a file that holds level 2.
        fs::copy(cache_path(dir.path(), 2, bc), cache_path(dir.path(), 3, bc)).unwrap();
        let (rebuilt, status) = load_or_build(dir.path(), 3, bc).unwrap();
        assert_eq!(status, CacheStatus::Rebuilt);
        assert_eq!(rebuilt.level(), 3);
        assert_eq!(
            load_or_build(dir.path(), 3, bc).unwrap().1,
            CacheStatus::Hit
        );
    }
}
