//! PLINK 1.9 binary trio (.bed/.bim/.fam) reading and writing.
//!
//! Only variant-major .bed files (mode byte 0x01) are accepted; sample-major
//! mode is legacy output and rejected. Bit layout per variant block: sample
//! `k` occupies bits `2(k % 4)..2(k % 4)+2` of byte `k / 4`, with
//! `00` = hom allele1, `01` = missing, `10` = het, `11` = hom allele2.
//! Dosage code 2 in memory counts allele1 copies, so `00` decodes to dosage 2.

use crate::genotype::{
    Dataset, DatasetError, GenotypeCall, PackedCalls, Phenotype, SampleRecord, Sex, VariantRecord,
};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: [u8; 2] = [0x6c, 0x1b];
const MODE_VARIANT_MAJOR: u8 = 0x01;

#[derive(Debug, Error)]
pub enum PlinkError {
    #[error("bad magic bytes in {path}: expected 6c 1b, found {found:02x?}")]
    BadMagic { path: String, found: Vec<u8> },
    #[error("unsupported .bed mode byte {0:#04x} (only variant-major 0x01 is supported)")]
    ModeUnsupported(u8),
    #[error(".bed file truncated: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),
    #[error("malformed {file} line {line}: {reason}")]
    ParseError {
        file: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    IoFailure(#[from] std::io::Error),
}

impl From<DatasetError> for PlinkError {
    fn from(e: DatasetError) -> Self {
        PlinkError::MetadataMismatch(e.to_string())
    }
}

// Per-lane translation between .bed codes and in-memory dosage codes.
// bed 00 -> dosage 2, 01 -> missing, 10 -> het, 11 -> dosage 0.
const fn lane_bed_to_mem(code: u8) -> u8 {
    match code {
        0b00 => 2,
        0b01 => 3,
        0b10 => 1,
        _ => 0,
    }
}

const fn lane_mem_to_bed(code: u8) -> u8 {
    match code {
        2 => 0b00,
        3 => 0b01,
        1 => 0b10,
        _ => 0b11,
    }
}

const fn build_bed_to_mem() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut b = 0usize;
    while b < 256 {
        let byte = b as u8;
        table[b] = lane_bed_to_mem(byte & 0b11)
            | (lane_bed_to_mem((byte >> 2) & 0b11) << 2)
            | (lane_bed_to_mem((byte >> 4) & 0b11) << 4)
            | (lane_bed_to_mem((byte >> 6) & 0b11) << 6);
        b += 1;
    }
    table
}

const fn build_mem_to_bed() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut b = 0usize;
    while b < 256 {
        let byte = b as u8;
        table[b] = lane_mem_to_bed(byte & 0b11)
            | (lane_mem_to_bed((byte >> 2) & 0b11) << 2)
            | (lane_mem_to_bed((byte >> 4) & 0b11) << 4)
            | (lane_mem_to_bed((byte >> 6) & 0b11) << 6);
        b += 1;
    }
    table
}

const BED_TO_MEM: [u8; 256] = build_bed_to_mem();
const MEM_TO_BED: [u8; 256] = build_mem_to_bed();

fn parse_sex(field: &str) -> Sex {
    match field {
        "1" => Sex::Male,
        "2" => Sex::Female,
        _ => Sex::Unknown,
    }
}

fn parse_phenotype(field: &str) -> Phenotype {
    match field {
        "1" => Phenotype::Control,
        "2" => Phenotype::Case,
        // 0 and -9 are both conventional missing markers
        _ => Phenotype::Missing,
    }
}

fn read_fam(path: &Path) -> Result<Vec<SampleRecord>, PlinkError> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(PlinkError::ParseError {
                file: path.display().to_string(),
                line: idx + 1,
                reason: format!("expected 6 columns, found {}", fields.len()),
            });
        }
        samples.push(SampleRecord {
            family_id: fields[0].to_string(),
            individual_id: fields[1].to_string(),
            reported_sex: parse_sex(fields[4]),
            phenotype: parse_phenotype(fields[5]),
        });
    }
    Ok(samples)
}

fn read_bim(path: &Path) -> Result<Vec<VariantRecord>, PlinkError> {
    let reader = BufReader::new(File::open(path)?);
    let mut variants = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(PlinkError::ParseError {
                file: path.display().to_string(),
                line: idx + 1,
                reason: format!("expected 6 columns, found {}", fields.len()),
            });
        }
        let parse_err = |what: &str| PlinkError::ParseError {
            file: path.display().to_string(),
            line: idx + 1,
            reason: format!("invalid {what}: {:?}", fields),
        };
        let genetic_distance: f64 = fields[2].parse().map_err(|_| parse_err("distance"))?;
        let position: i64 = fields[3].parse().map_err(|_| parse_err("position"))?;
        if position < 0 {
            return Err(parse_err("position"));
        }
        variants.push(VariantRecord {
            id: fields[1].to_string(),
            chromosome: fields[0].to_string(),
            position: position as u64,
            allele1: fields[4].to_string(),
            allele2: fields[5].to_string(),
            genetic_distance,
        });
    }
    Ok(variants)
}

/// Read a .bed/.bim/.fam trio into a [`Dataset`].
pub fn read_bed_dataset(
    bed_path: &Path,
    bim_path: &Path,
    fam_path: &Path,
) -> Result<Dataset, PlinkError> {
    let samples = read_fam(fam_path)?;
    let variants = read_bim(bim_path)?;
    let n_samples = samples.len();
    let n_variants = variants.len();
    let bytes_per_variant = n_samples.div_ceil(4);

    let mut file = File::open(bed_path)?;
    let mut header = [0u8; 3];
    let got = file.read(&mut header)?;
    if got < 2 || header[..2] != MAGIC {
        return Err(PlinkError::BadMagic {
            path: bed_path.display().to_string(),
            found: header[..got.min(3)].to_vec(),
        });
    }
    if got < 3 {
        return Err(PlinkError::TruncatedFile {
            expected: 3,
            actual: got as u64,
        });
    }
    if header[2] != MODE_VARIANT_MAJOR {
        return Err(PlinkError::ModeUnsupported(header[2]));
    }

    let expected = 3 + (n_variants as u64) * (bytes_per_variant as u64);
    let actual = file.metadata()?.len();
    if actual < expected {
        return Err(PlinkError::TruncatedFile { expected, actual });
    }
    if actual > expected {
        return Err(PlinkError::MetadataMismatch(format!(
            ".bed holds {actual} bytes but .bim/.fam imply {expected}"
        )));
    }

    let mut body = Vec::with_capacity((expected - 3) as usize);
    file.read_to_end(&mut body)?;
    let mut calls = PackedCalls::filled(n_samples, n_variants, GenotypeCall::HomMajor);
    let tail = n_samples % 4;
    let pad_mask = if tail == 0 { 0xff } else { (1u8 << (2 * tail)) - 1 };
    for v in 0..n_variants {
        let src = &body[v * bytes_per_variant..(v + 1) * bytes_per_variant];
        let dst = calls.variant_bytes_mut(v);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = BED_TO_MEM[*s as usize];
        }
        if let Some(last) = dst.last_mut() {
            *last &= pad_mask; // pad lanes ignored regardless of file content
        }
    }
    Ok(Dataset::new(samples, variants, calls)?)
}

fn sex_field(sex: Sex) -> &'static str {
    match sex {
        Sex::Male => "1",
        Sex::Female => "2",
        Sex::Unknown => "0",
    }
}

fn phenotype_field(pheno: Phenotype) -> &'static str {
    match pheno {
        Phenotype::Control => "1",
        Phenotype::Case => "2",
        Phenotype::Missing => "-9",
    }
}

/// Write a [`Dataset`] as a .bed/.bim/.fam trio. Pad bits are written as 0.
pub fn write_bed_dataset(
    ds: &Dataset,
    bed_path: &Path,
    bim_path: &Path,
    fam_path: &Path,
) -> Result<(), PlinkError> {
    let mut fam = BufWriter::new(File::create(fam_path)?);
    for s in ds.samples() {
        writeln!(
            fam,
            "{} {} 0 0 {} {}",
            s.family_id,
            s.individual_id,
            sex_field(s.reported_sex),
            phenotype_field(s.phenotype)
        )?;
    }
    fam.flush()?;

    let mut bim = BufWriter::new(File::create(bim_path)?);
    for v in ds.variants() {
        writeln!(
            bim,
            "{} {} {} {} {} {}",
            v.chromosome, v.id, v.genetic_distance, v.position, v.allele1, v.allele2
        )?;
    }
    bim.flush()?;

    let mut bed = BufWriter::new(File::create(bed_path)?);
    bed.write_all(&MAGIC)?;
    bed.write_all(&[MODE_VARIANT_MAJOR])?;
    let n = ds.n_samples();
    let tail = n % 4;
    // in-memory pads are dosage 0 which maps to bed 11; mask them back to 00
    let pad_mask = if tail == 0 { 0xff } else { (1u8 << (2 * tail)) - 1 };
    let mut block = vec![0u8; ds.calls().bytes_per_variant()];
    for v in 0..ds.n_variants() {
        let src = ds.calls().variant_bytes(v);
        for (d, s) in block.iter_mut().zip(src) {
            *d = MEM_TO_BED[*s as usize];
        }
        if let Some(last) = block.last_mut() {
            *last &= pad_mask;
        }
        bed.write_all(&block)?;
    }
    bed.flush()?;
    Ok(())
}
