use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use super::{
    DataError, Dataset, DomainRef, DomainRole, DomainSet, Interaction, InteractionRecord, Schema,
    SideInfoRecord, Vocabularies,
};

pub const INTERACTIONS_HEADER: &str = "user_id\titem_id\tdomain_id\tsignal\ttimestamp";
pub const SIDE_INFO_HEADER: &str = "item_id\tcategory_id";

const MAX_SAMPLES: usize = 5;

fn open(path: &Path) -> Result<BufReader<File>, DataError> {
    File::open(path).map(BufReader::new).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_err(path: &str) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_string(),
        source,
    }
}

/// Reads `interactions.tsv`.
///
/// `vocab` seeds the vocabularies (pass the ones stored with a checkpoint to
/// keep indices stable); new ids are appended in first-seen order. Rows that
/// fail to parse are counted; more than `max_malformed_frac` of the data rows
/// aborts ingestion.
pub fn load_interactions(
    path: &Path,
    schema: Schema,
    domains: &DomainSet,
    vocab: Vocabularies,
    max_malformed_frac: f64,
) -> Result<Dataset, DataError> {
    parse_interactions(open(path)?, schema, domains, vocab, max_malformed_frac)
}

fn parse_row(line: &str, schema: Schema) -> Result<InteractionRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    }
    if fields[..3].iter().any(|f| f.is_empty()) {
        return Err("empty id field".into());
    }
    let signal: f64 = fields[3]
        .trim()
        .parse()
        .map_err(|_| format!("bad signal `{}`", fields[3]))?;
    if !schema.accepts(signal) {
        return Err(format!("signal {signal} outside {} range", schema.name()));
    }
    let timestamp: i64 = fields[4]
        .trim()
        .parse()
        .map_err(|_| format!("bad timestamp `{}`", fields[4]))?;
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    Ok(InteractionRecord {
        user_id: fields[0].to_string(),
        item_id: fields[1].to_string(),
        domain_id: fields[2].to_string(),
        signal,
        timestamp,
    })
}

pub fn parse_interactions<R: BufRead>(
    reader: R,
    schema: Schema,
    domains: &DomainSet,
    mut vocab: Vocabularies,
    max_malformed_frac: f64,
) -> Result<Dataset, DataError> {
    for t in &domains.targets {
        vocab.domains.intern(t);
    }
    let mut interactions = Vec::new();
    let mut malformed = 0usize;
    let mut samples = Vec::new();
    let mut total = 0usize;

    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err("<interactions>"))?;
        let line = line.trim_end_matches('\r');
        if n == 0 {
            if line != INTERACTIONS_HEADER {
                return Err(DataError::Header {
                    expected: INTERACTIONS_HEADER.into(),
                    found: line.into(),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        total += 1;
        let rec = match parse_row(line, schema) {
            Ok(r) => r,
            Err(why) => {
                malformed += 1;
                if samples.len() < MAX_SAMPLES {
                    samples.push(format!("line {}: {why}", n + 1));
                }
                continue;
            }
        };
        let role = domains
            .resolve(&rec.domain_id)
            .ok_or_else(|| DataError::UnknownDomain {
                line: n + 1,
                domain: rec.domain_id.clone(),
            })?;
        let user = vocab.users.intern(&rec.user_id);
        let (item, domain) = match role {
            DomainRole::Source => (vocab.src_items.intern(&rec.item_id), DomainRef::Source),
            DomainRole::Target => (
                vocab.tgt_items.intern(&rec.item_id),
                DomainRef::Target(vocab.domains.intern(&rec.domain_id)),
            ),
        };
        interactions.push(Interaction {
            user,
            item,
            domain,
            signal: rec.signal,
            timestamp: rec.timestamp,
        });
    }

    if malformed > 0 {
        let frac = malformed as f64 / total as f64;
        if frac > max_malformed_frac {
            return Err(DataError::Malformed {
                count: malformed,
                total,
                limit: max_malformed_frac * 100.0,
                samples,
            });
        }
        warn!("skipped {malformed} of {total} malformed interaction rows: {samples:?}");
    }

    let n_src = vocab.src_items.len();
    Ok(Dataset {
        schema,
        domains: domains.clone(),
        vocab,
        interactions,
        src_item_category: vec![None; n_src],
        malformed,
    })
}

/// Indexes in-memory records exactly as [`parse_interactions`] would index
/// the same rows read from a file, then attaches `side_info`.
pub fn dataset_from_records(
    records: &[InteractionRecord],
    side_info: &[SideInfoRecord],
    schema: Schema,
    domains: &DomainSet,
    mut vocab: Vocabularies,
) -> Result<Dataset, DataError> {
    for t in &domains.targets {
        vocab.domains.intern(t);
    }
    let mut interactions = Vec::with_capacity(records.len());
    for (n, rec) in records.iter().enumerate() {
        if !schema.accepts(rec.signal) {
            return Err(DataError::Argument(format!(
                "record {n}: signal {} outside the {} schema",
                rec.signal,
                schema.name()
            )));
        }
        let role = domains
            .resolve(&rec.domain_id)
            .ok_or_else(|| DataError::UnknownDomain {
                line: n + 1,
                domain: rec.domain_id.clone(),
            })?;
        let user = vocab.users.intern(&rec.user_id);
        let (item, domain) = match role {
            DomainRole::Source => (vocab.src_items.intern(&rec.item_id), DomainRef::Source),
            DomainRole::Target => (
                vocab.tgt_items.intern(&rec.item_id),
                DomainRef::Target(vocab.domains.intern(&rec.domain_id)),
            ),
        };
        interactions.push(Interaction {
            user,
            item,
            domain,
            signal: rec.signal,
            timestamp: rec.timestamp,
        });
    }
    let n_src = vocab.src_items.len();
    let mut data = Dataset {
        schema,
        domains: domains.clone(),
        vocab,
        interactions,
        src_item_category: vec![None; n_src],
        malformed: 0,
    };
    apply_side_info(side_info, &mut data);
    Ok(data)
}

/// Reads `side_info.tsv` into the dataset's category vocabulary.
///
/// Items not present in the source vocabulary are ignored; duplicates keep the
/// first category.
pub fn load_side_info(path: &Path, data: &mut Dataset) -> Result<(), DataError> {
    let records = parse_side_info(open(path)?)?;
    apply_side_info(&records, data);
    Ok(())
}

pub fn parse_side_info<R: BufRead>(reader: R) -> Result<Vec<SideInfoRecord>, DataError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err("<side_info>"))?;
        let line = line.trim_end_matches('\r');
        if n == 0 {
            if line != SIDE_INFO_HEADER {
                return Err(DataError::Header {
                    expected: SIDE_INFO_HEADER.into(),
                    found: line.into(),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(item), Some(cat), None) if !item.is_empty() && !cat.is_empty() => {
                out.push(SideInfoRecord {
                    item_id: item.to_string(),
                    category_id: cat.to_string(),
                })
            }
            _ => warn!("side_info line {}: malformed, skipped", n + 1),
        }
    }
    Ok(out)
}

pub(crate) fn apply_side_info(records: &[SideInfoRecord], data: &mut Dataset) {
    data.src_item_category.resize(data.vocab.src_items.len(), None);
    for rec in records {
        let Some(item) = data.vocab.src_items.get(&rec.item_id) else {
            continue;
        };
        if let Some(existing) = data.src_item_category[item] {
            if data.vocab.categories.id(existing) != rec.category_id {
                warn!(
                    "item {} has several categories; keeping {}",
                    rec.item_id,
                    data.vocab.categories.id(existing)
                );
            }
            continue;
        }
        data.src_item_category[item] = Some(data.vocab.categories.intern(&rec.category_id));
    }
}

fn format_signal(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn write_interactions(path: &Path, records: &[InteractionRecord]) -> Result<(), DataError> {
    let p = path.display().to_string();
    let file = File::create(path).map_err(io_err(&p))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{INTERACTIONS_HEADER}").map_err(io_err(&p))?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.user_id,
            r.item_id,
            r.domain_id,
            format_signal(r.signal),
            r.timestamp
        )
        .map_err(io_err(&p))?;
    }
    w.flush().map_err(io_err(&p))
}

pub fn write_side_info(path: &Path, records: &[SideInfoRecord]) -> Result<(), DataError> {
    let p = path.display().to_string();
    let file = File::create(path).map_err(io_err(&p))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{SIDE_INFO_HEADER}").map_err(io_err(&p))?;
    for r in records {
        writeln!(w, "{}\t{}", r.item_id, r.category_id).map_err(io_err(&p))?;
    }
    w.flush().map_err(io_err(&p))
}
