//! World Color Survey ingest: term files to probabilistic naming systems,
//! plus a synthetic stand-in corpus for when the survey data is absent.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::color::{lab_distance_sq, ChipGrid};
use crate::error::{Error, Result};
use crate::ib::{complexity, NamingSystem};
use crate::matrix::Matrix;
use crate::random_model::WCS_COMPLEXITY_RANGE;
use crate::seeds;

/// Survey chip id to grid position table shipped with the crate.
pub const BUNDLED_CHIP_IDS: &str = include_str!("../../../data/chip_ids.tsv");

pub const TERM_FILE: &str = "term.txt";
pub const DICT_FILE: &str = "dict.txt";
pub const LANG_FILE: &str = "lang.txt";
pub const CHIP_MAP_FILE: &str = "cnum.txt";
pub const CHECKSUM_FILE: &str = "SHA256SUMS";

#[derive(Clone, Debug, PartialEq)]
pub struct WcsLanguage {
    pub id: u32,
    pub name: String,
    pub encoder: NamingSystem,
    /// Term labels in word order.
    pub terms: Vec<String>,
    pub num_terms: usize,
    pub speaker_count: usize,
    /// Fewer than two distinct terms were observed.
    pub flagged: bool,
}

/// Maps survey chip ids (1-based) to grid indices.
#[derive(Clone, Debug)]
pub struct ChipIdMap {
    to_grid: HashMap<u32, usize>,
}

impl ChipIdMap {
    /// Parses `id row column ...` lines; lines starting with `#` and a
    /// non-numeric header are skipped, extra columns are ignored.
    pub fn parse<R: BufRead>(reader: R, grid: &ChipGrid) -> Result<Self> {
        let mut to_grid = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split_whitespace().collect();
            let Ok(id) = fields[0].parse::<u32>() else {
                if lineno == 0 {
                    continue;
                }
                return Err(Error::format(format!("chip map line {}: bad id {:?}", lineno + 1, fields[0])));
            };
            if fields.len() < 3 {
                return Err(Error::format(format!("chip map line {}: expected id, row, column", lineno + 1)));
            }
            let row = fields[1]
                .chars()
                .next()
                .filter(|_| fields[1].len() == 1)
                .ok_or_else(|| Error::format(format!("chip map line {}: bad row", lineno + 1)))?;
            let col: u8 = fields[2]
                .parse()
                .map_err(|_| Error::format(format!("chip map line {}: bad column", lineno + 1)))?;
            let idx = grid.position(row.to_ascii_uppercase(), col).ok_or_else(|| {
                Error::format(format!("chip map line {}: {row}{col} is not on the grid", lineno + 1))
            })?;
            if to_grid.insert(id, idx).is_some() {
                return Err(Error::format(format!("chip map: id {id} listed twice")));
            }
        }
        if to_grid.len() != grid.len() {
            return Err(Error::format(format!(
                "chip map covers {} ids, grid has {} chips",
                to_grid.len(),
                grid.len()
            )));
        }
        Ok(ChipIdMap { to_grid })
    }

    pub fn bundled(grid: &ChipGrid) -> Result<Self> {
        ChipIdMap::parse(BUNDLED_CHIP_IDS.as_bytes(), grid)
    }

    pub fn grid_index(&self, id: u32) -> Option<usize> {
        self.to_grid.get(&id).copied()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Fail on chips without responses instead of imputing the language's
    /// term marginal.
    pub strict_missing: bool,
}

/// Parses `lang code term ...` dictionary lines into per-language term names.
pub fn parse_dictionary<R: BufRead>(reader: R) -> Result<HashMap<(u32, String), String>> {
    let mut out = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split('\t').flat_map(|f| f.split_whitespace()).collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        let Ok(lang) = fields[0].parse::<u32>() else {
            if lineno == 0 {
                continue;
            }
            return Err(Error::format(format!("dictionary line {}: bad language id", lineno + 1)));
        };
        if fields.len() < 3 {
            return Err(Error::format(format!("dictionary line {}: expected lang, code, term", lineno + 1)));
        }
        out.insert((lang, fields[1].to_string()), fields[2..].join(" "));
    }
    Ok(out)
}

/// Parses `lang name` lines.
pub fn parse_language_names<R: BufRead>(reader: R) -> Result<HashMap<u32, String>> {
    let mut out = HashMap::new();
    for line in reader.lines() {
        let line = line?;
        let mut parts = line.trim().splitn(2, char::is_whitespace);
        if let (Some(id), Some(name)) = (parts.next(), parts.next()) {
            if let Ok(id) = id.parse::<u32>() {
                out.insert(id, name.trim().to_string());
            }
        }
    }
    Ok(out)
}

/// Builds one naming system per language from `lang speaker chip term`
/// responses: `q(w|c)` is the fraction of responses for chip `c` that used
/// term `w`. A term of `*` marks a missing response. Languages are sorted by id.
pub fn parse_wcs<T: BufRead, D: BufRead>(
    terms: T,
    dict: Option<D>,
    chip_map: &ChipIdMap,
    grid: &ChipGrid,
    opts: ParseOptions,
) -> Result<Vec<WcsLanguage>> {
    let dictionary = match dict {
        Some(d) => parse_dictionary(d)?,
        None => HashMap::new(),
    };
    // lang -> (term -> chip counts, speakers)
    struct Tally {
        counts: BTreeMap<String, Vec<u32>>,
        speakers: BTreeSet<u32>,
    }
    let mut langs: BTreeMap<u32, Tally> = BTreeMap::new();
    for (lineno, line) in terms.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(Error::format(format!("term line {}: expected lang, speaker, chip, term", lineno + 1)));
        }
        let parse = |s: &str, what: &str| -> Result<u32> {
            s.parse().map_err(|_| Error::format(format!("term line {}: bad {what} {s:?}", lineno + 1)))
        };
        let lang = match parse(fields[0], "language id") {
            Ok(v) => v,
            Err(e) if lineno == 0 => {
                let _ = e;
                continue;
            }
            Err(e) => return Err(e),
        };
        let speaker = parse(fields[1], "speaker id")?;
        let chip_id = parse(fields[2], "chip id")?;
        if chip_id == 0 || chip_id as usize > grid.len() {
            return Err(Error::format(format!(
                "term line {}: chip id {chip_id} outside 1..={}",
                lineno + 1,
                grid.len()
            )));
        }
        let chip = chip_map
            .grid_index(chip_id)
            .ok_or_else(|| Error::format(format!("term line {}: chip id {chip_id} is not mapped", lineno + 1)))?;
        let term = fields[3];
        let tally = langs.entry(lang).or_insert_with(|| Tally { counts: BTreeMap::new(), speakers: BTreeSet::new() });
        tally.speakers.insert(speaker);
        if term == "*" {
            continue;
        }
        tally.counts.entry(term.to_string()).or_insert_with(|| vec![0; grid.len()])[chip] += 1;
    }

    let n = grid.len();
    let mut out = Vec::with_capacity(langs.len());
    for (id, tally) in langs {
        let k = tally.counts.len();
        if k == 0 {
            return Err(Error::format(format!("language {id} has no responses")));
        }
        let mut m = Matrix::zeros(k, n);
        let mut marginal = vec![0.0; k];
        for (w, counts) in tally.counts.values().enumerate() {
            for c in 0..n {
                m[(w, c)] = counts[c] as f64;
                marginal[w] += counts[c] as f64;
            }
        }
        let total: f64 = marginal.iter().sum();
        for c in 0..n {
            let chip_total: f64 = (0..k).map(|w| m[(w, c)]).sum();
            if chip_total == 0.0 {
                if opts.strict_missing {
                    return Err(Error::format(format!("language {id}: chip {c} has no responses")));
                }
                for w in 0..k {
                    m[(w, c)] = marginal[w] / total;
                }
            } else {
                for w in 0..k {
                    m[(w, c)] /= chip_total;
                }
            }
        }
        let terms: Vec<String> = tally
            .counts
            .keys()
            .map(|code| dictionary.get(&(id, code.clone())).cloned().unwrap_or_else(|| code.clone()))
            .collect();
        out.push(WcsLanguage {
            id,
            name: format!("lang{id}"),
            encoder: NamingSystem::from_weights(m)?,
            terms,
            num_terms: k,
            speaker_count: tally.speakers.len(),
            flagged: k < 2,
        });
    }
    Ok(out)
}

/// Hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    }))
}

/// Checks every `<hex>  <file>` entry of a checksum list in `dir`.
pub fn verify_checksums(dir: &Path) -> Result<usize> {
    let list = dir.join(CHECKSUM_FILE);
    let text = std::fs::read_to_string(&list)
        .map_err(|_| Error::DataMissing(format!("{} not found", list.display())))?;
    let mut checked = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let (Some(expected), Some(name)) = (parts.next(), parts.next()) else {
            return Err(Error::format(format!("bad checksum line {line:?}")));
        };
        let name = name.trim_start_matches('*');
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::DataMissing(format!("{} listed in {CHECKSUM_FILE} is missing", path.display())));
        }
        let got = sha256_file(&path)?;
        if !got.eq_ignore_ascii_case(expected) {
            return Err(Error::validation(format!("checksum mismatch for {name}: expected {expected}, got {got}")));
        }
        checked += 1;
    }
    Ok(checked)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Loads survey files from `dir`: `term.txt` (required), `dict.txt`,
/// `lang.txt`, and a chip map `cnum.txt` (the bundled map otherwise).
/// Checksums are verified when `SHA256SUMS` is present.
pub fn load_wcs_dir(dir: &Path, grid: &ChipGrid, opts: ParseOptions) -> Result<Vec<WcsLanguage>> {
    let term_path = dir.join(TERM_FILE);
    if !term_path.exists() {
        return Err(Error::DataMissing(format!(
            "{} not found; download the World Color Survey data files into {}",
            term_path.display(),
            dir.display()
        )));
    }
    if dir.join(CHECKSUM_FILE).exists() {
        verify_checksums(dir)?;
    }
    let map_path = dir.join(CHIP_MAP_FILE);
    let chip_map = if map_path.exists() {
        ChipIdMap::parse(open(&map_path)?, grid)?
    } else {
        ChipIdMap::bundled(grid)?
    };
    let dict_path = dir.join(DICT_FILE);
    let dict = if dict_path.exists() { Some(open(&dict_path)?) } else { None };
    let mut langs = parse_wcs(open(&term_path)?, dict, &chip_map, grid, opts)?;
    let lang_path = dir.join(LANG_FILE);
    if lang_path.exists() {
        let names = parse_language_names(open(&lang_path)?)?;
        for l in &mut langs {
            if let Some(name) = names.get(&l.id) {
                l.name = name.clone();
            }
        }
    }
    Ok(langs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceSource {
    Survey,
    Fixture,
}

impl ReferenceSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceSource::Survey => "wcs",
            ReferenceSource::Fixture => "fixture",
        }
    }
}

/// Survey languages from `dir` when its term file exists, fixtures otherwise.
pub fn reference_languages(dir: Option<&Path>, grid: &ChipGrid) -> Result<(Vec<WcsLanguage>, ReferenceSource)> {
    if let Some(d) = dir {
        if d.join(TERM_FILE).exists() {
            return Ok((load_wcs_dir(d, grid, ParseOptions::default())?, ReferenceSource::Survey));
        }
    }
    Ok((fixture_languages(grid), ReferenceSource::Fixture))
}

/// Number of synthetic stand-in languages.
pub const FIXTURE_COUNT: usize = 110;
const FIXTURE_SPEAKERS: u32 = 12;
const FIXTURE_SEED: u64 = 0x00c0_105e_ed00_0001;

/// Focal prototype cells for each vocabulary size, following the usual
/// order in which basic color terms appear across languages.
fn focal_prototypes(k: usize) -> &'static [(char, u8)] {
    match k {
        3 => &[('A', 0), ('G', 2), ('H', 29)],
        4 => &[('A', 0), ('G', 2), ('C', 9), ('H', 29)],
        5 => &[('A', 0), ('J', 0), ('G', 2), ('C', 9), ('F', 23)],
        6 => &[('A', 0), ('J', 0), ('G', 2), ('C', 9), ('F', 17), ('F', 29)],
        _ => &[('A', 0), ('J', 0), ('G', 2), ('C', 9), ('F', 17), ('F', 29), ('H', 6)],
    }
}

fn jitter<R: Rng>(grid: &ChipGrid, cell: (char, u8), rows: i32, cols: i32, rng: &mut R) -> (char, u8) {
    let row_idx = |r: char| r as i32 - 'A' as i32;
    loop {
        let r = (row_idx(cell.0) + rng.gen_range(-rows..=rows)).clamp(0, 9);
        let row = (b'A' + r as u8) as char;
        let col = if cell.1 == 0 {
            0
        } else {
            ((cell.1 as i32 - 1 + rng.gen_range(-cols..=cols)).rem_euclid(40) + 1) as u8
        };
        if grid.position(row, col).is_some() {
            return (row, col);
        }
    }
}

/// Simulated term responses for one synthetic language: each speaker names
/// every chip by sampling from a sharp Gaussian-kernel system around
/// jittered focal prototypes.
fn fixture_responses(grid: &ChipGrid, lang: u32, k: usize, attempt: u64, out: &mut String) {
    let mut rng = seeds::stream(FIXTURE_SEED, &[lang as u64, attempt]);
    let base: Vec<(char, u8)> = focal_prototypes(k).iter().map(|&c| jitter(grid, c, 1, 2, &mut rng)).collect();
    let mut weights = vec![0.0; k];
    for speaker in 1..=FIXTURE_SPEAKERS {
        let eta: f64 = rng.gen_range(0.004..0.012);
        let protos: Vec<usize> = base
            .iter()
            .map(|&c| {
                let (r, col) = jitter(grid, c, 1, 1, &mut rng);
                grid.position(r, col).expect("jitter stays on the grid")
            })
            .collect();
        for c in 0..grid.len() {
            let d: Vec<f64> = protos.iter().map(|&p| lab_distance_sq(grid.lab(c), grid.lab(p))).collect();
            let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
            for (w, dw) in weights.iter_mut().zip(&d) {
                *w = (-eta * (dw - dmin)).exp();
            }
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut term = k - 1;
            for (w, &v) in weights.iter().enumerate() {
                if u < v {
                    term = w;
                    break;
                }
                u -= v;
            }
            writeln!(out, "{lang}\t{speaker}\t{}\tT{term}", c + 1).unwrap();
        }
    }
}

/// Deterministic synthetic languages standing in for the survey: vocabulary
/// sizes cycle through 3..=7 and every language's complexity lies in the
/// survey's range. Chip ids follow the bundled map.
pub fn fixture_languages(grid: &ChipGrid) -> Vec<WcsLanguage> {
    let chip_map = ChipIdMap::bundled(grid).expect("bundled chip map matches the bundled grid");
    let (lo, hi) = WCS_COMPLEXITY_RANGE;
    (0..FIXTURE_COUNT as u32)
        .map(|i| {
            let id = i + 1;
            let k = 3 + (i as usize % 5);
            for attempt in 0.. {
                let mut text = String::new();
                fixture_responses(grid, id, k, attempt, &mut text);
                let mut langs = parse_wcs(text.as_bytes(), None::<&[u8]>, &chip_map, grid, ParseOptions::default())
                    .expect("fixture responses are well formed");
                let mut lang = langs.pop().expect("one language per fixture");
                let cx = complexity(&lang.encoder, grid).expect("fixture matches grid");
                if (lo..=hi).contains(&cx) {
                    lang.name = format!("fixture{id:03}");
                    return lang;
                }
            }
            unreachable!()
        })
        .collect()
}
