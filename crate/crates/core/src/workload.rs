// Copyright 2026 The qpopss Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Seeded Zipf stream generation and the TEXT / BIN stream file formats.
//!
//! Samples come from a [`rand_pcg::Pcg64`] (PCG XSL RR 128/64) seeded with
//! `seed_from_u64`, so a [`StreamSpec`] fixes the output bit for bit.
//!
//! TEXT is one unsigned decimal id per LF-terminated line. BIN is the
//! 8-byte magic `QPOPSTRM` followed by little-endian `u64` ids.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Location, Result};
use crate::heap::ElementId;
use crate::oracle::ZipfParams;

/// Largest universe the sampler will build a CDF table for.
pub const DEFAULT_TABLE_CAP: u64 = 1 << 27;

pub const BIN_MAGIC: &[u8; 8] = b"QPOPSTRM";

/// Mixed into the seed for the rank-to-id permutation so that it is
/// independent of the sample sequence.
const SHUFFLE_SALT: u64 = 0x5851_f42d_4c95_7f2d;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub zipf: ZipfParams,
    pub length: u64,
    pub seed: u64,
    /// Map ranks to a seeded permutation of `1..=universe` instead of
    /// emitting the rank itself.
    pub rank_shuffle: bool,
}

impl StreamSpec {
    pub fn new(skew_a: f64, universe: u64, length: u64, seed: u64) -> Result<Self> {
        let spec = StreamSpec { zipf: ZipfParams::new(skew_a, universe)?, length, seed, rank_shuffle: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn shuffled(mut self, on: bool) -> Self {
        self.rank_shuffle = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ZipfParams::new(self.zipf.skew_a, self.zipf.universe)?;
        if self.length == 0 {
            return Err(invalid("stream length must be at least 1"));
        }
        Ok(())
    }
}

/// Cumulative Zipf weights over ranks `1..=universe`.
#[derive(Debug, Clone)]
pub struct ZipfTable {
    cdf: Box<[f64]>,
}

impl ZipfTable {
    pub fn new(p: &ZipfParams) -> Result<Self> {
        Self::with_cap(p, DEFAULT_TABLE_CAP)
    }

    pub fn with_cap(p: &ZipfParams, cap: u64) -> Result<Self> {
        let p = ZipfParams::new(p.skew_a, p.universe)?;
        if p.universe > cap {
            return Err(invalid(format!("universe {} exceeds the CDF table cap of {cap} entries", p.universe)));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=p.universe)
            .map(|i| {
                acc += (i as f64).powf(-p.skew_a);
                acc
            })
            .collect();
        let h = acc;
        for c in &mut cdf {
            *c /= h;
        }
        *cdf.last_mut().expect("universe is nonempty") = 1.0;
        Ok(ZipfTable { cdf: cdf.into_boxed_slice() })
    }

    pub fn universe(&self) -> u64 {
        self.cdf.len() as u64
    }

    /// Probability of rank `r` (1-based).
    pub fn pmf(&self, r: u64) -> f64 {
        let i = (r - 1) as usize;
        if i == 0 {
            self.cdf[0]
        } else {
            self.cdf[i] - self.cdf[i - 1]
        }
    }

    /// Rank whose CDF interval contains `u` in `[0, 1)`.
    #[inline]
    pub fn rank_of(&self, u: f64) -> u64 {
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.cdf.len() - 1) as u64 + 1
    }
}

/// Iterator over the ids of a generated stream.
#[derive(Debug, Clone)]
pub struct ZipfStream {
    table: ZipfTable,
    ids: Option<Box<[ElementId]>>,
    rng: Pcg64,
    remaining: u64,
}

impl Iterator for ZipfStream {
    type Item = ElementId;

    #[inline]
    fn next(&mut self) -> Option<ElementId> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let r = self.table.rank_of(self.rng.random::<f64>());
        Some(match &self.ids {
            Some(ids) => ids[(r - 1) as usize],
            None => r,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

pub fn generate(spec: &StreamSpec) -> Result<ZipfStream> {
    spec.validate()?;
    let table = ZipfTable::new(&spec.zipf)?;
    let ids = spec.rank_shuffle.then(|| {
        let mut ids: Vec<ElementId> = (1..=spec.zipf.universe).collect();
        ids.shuffle(&mut Pcg64::seed_from_u64(spec.seed ^ SHUFFLE_SALT));
        ids.into_boxed_slice()
    });
    Ok(ZipfStream { table, ids, rng: Pcg64::seed_from_u64(spec.seed), remaining: spec.length })
}

/// Generates the whole stream into memory.
pub fn generate_vec(spec: &StreamSpec) -> Result<Vec<ElementId>> {
    Ok(generate(spec)?.collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Bin,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Format::Text),
            "bin" => Ok(Format::Bin),
            other => Err(invalid(format!("unknown stream format {other:?}; expected text or bin"))),
        }
    }
}

/// Guesses the format of a stream file from its first bytes.
pub fn detect_format(path: &Path) -> Result<Format> {
    let mut head = Vec::with_capacity(8);
    File::open(path)?.take(8).read_to_end(&mut head)?;
    Ok(if head == BIN_MAGIC { Format::Bin } else { Format::Text })
}

/// Streaming reader over either file format; yields one id per item.
pub struct StreamReader<R> {
    inner: R,
    format: Format,
    /// Line number (TEXT) or byte offset (BIN) of the next record.
    position: u64,
    line: String,
    failed: bool,
}

impl StreamReader<BufReader<File>> {
    pub fn open(path: &Path, format: Format) -> Result<Self> {
        StreamReader::new(BufReader::new(File::open(path)?), format)
    }
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(mut inner: R, format: Format) -> Result<Self> {
        let position = match format {
            Format::Text => 1,
            Format::Bin => {
                let mut magic = [0u8; 8];
                let got = read_full(&mut inner, &mut magic)?;
                if got < 8 || &magic != BIN_MAGIC {
                    return Err(Error::Parse { at: Location::ByteOffset(0), message: "missing QPOPSTRM magic".into() });
                }
                8
            }
        };
        Ok(StreamReader { inner, format, position, line: String::new(), failed: false })
    }

    fn next_text(&mut self) -> Result<Option<ElementId>> {
        self.line.clear();
        if self.inner.read_line(&mut self.line)? == 0 {
            return Ok(None);
        }
        let at = Location::Line(self.position);
        self.position += 1;
        let body = self.line.strip_suffix('\n').unwrap_or(&self.line);
        if body.is_empty() {
            return Err(Error::Parse { at, message: "blank line".into() });
        }
        if !body.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Parse { at, message: format!("not an unsigned decimal: {body:?}") });
        }
        body.parse().map(Some).map_err(|e| Error::Parse { at, message: format!("{e}: {body:?}") })
    }

    fn next_bin(&mut self) -> Result<Option<ElementId>> {
        let mut buf = [0u8; 8];
        match read_full(&mut self.inner, &mut buf)? {
            0 => Ok(None),
            8 => {
                self.position += 8;
                Ok(Some(u64::from_le_bytes(buf)))
            }
            n => Err(Error::Parse {
                at: Location::ByteOffset(self.position),
                message: format!("truncated record: {n} of 8 bytes"),
            }),
        }
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<ElementId>;

    fn next(&mut self) -> Option<Result<ElementId>> {
        if self.failed {
            return None;
        }
        let out = match self.format {
            Format::Text => self.next_text(),
            Format::Bin => self.next_bin(),
        };
        match out {
            Ok(v) => v.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

pub fn read_stream(path: &Path, format: Format) -> Result<StreamReader<BufReader<File>>> {
    StreamReader::open(path, format)
}

/// Reads a whole stream file, detecting its format.
pub fn read_stream_vec(path: &Path) -> Result<Vec<ElementId>> {
    read_stream(path, detect_format(path)?)?.collect()
}

pub struct StreamWriter<W: Write> {
    inner: W,
    format: Format,
    written: u64,
}

impl StreamWriter<BufWriter<File>> {
    pub fn create(path: &Path, format: Format) -> Result<Self> {
        StreamWriter::new(BufWriter::new(File::create(path)?), format)
    }
}

impl<W: Write> StreamWriter<W> {
    pub fn new(mut inner: W, format: Format) -> Result<Self> {
        if format == Format::Bin {
            inner.write_all(BIN_MAGIC)?;
        }
        Ok(StreamWriter { inner, format, written: 0 })
    }

    #[inline]
    pub fn write(&mut self, e: ElementId) -> Result<()> {
        match self.format {
            Format::Text => writeln!(self.inner, "{e}")?,
            Format::Bin => self.inner.write_all(&e.to_le_bytes())?,
        }
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes `seq` to `path`; returns the number of records.
pub fn write_stream<I: IntoIterator<Item = ElementId>>(path: &Path, format: Format, seq: I) -> Result<u64> {
    let mut w = StreamWriter::create(path, format)?;
    for e in seq {
        w.write(e)?;
    }
    let n = w.written();
    w.finish()?;
    Ok(n)
}
