//! Streaming citation reader for MEDLINE/PubMed baseline XML.
//!
//! Only `PubmedArticle/MedlineCitation/PMID` and
//! `PubmedArticle/MedlineCitation/Article/ArticleTitle` are read; every other
//! element is skipped without being buffered, so memory stays bounded by the
//! largest single record regardless of file size.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::ops::AddAssign;
use std::path::Path;

use flate2::read::MultiGzDecoder;
use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::text::collapse_whitespace;
use crate::{Error, Result};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub pmid: String,
    pub title: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub files_read: u64,
    pub citations_scanned: u64,
    pub records_skipped_malformed: u64,
}

impl AddAssign for CorpusStats {
    fn add_assign(&mut self, rhs: Self) {
        self.files_read += rhs.files_read;
        self.citations_scanned += rhs.citations_scanned;
        self.records_skipped_malformed += rhs.records_skipped_malformed;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Compression {
    /// Sniff the gzip magic bytes.
    #[default]
    Auto,
    Gzip,
    Plain,
}

impl Compression {
    pub fn from_flag(compressed: bool) -> Self {
        if compressed {
            Compression::Gzip
        } else {
            Compression::Auto
        }
    }
}

pub type DynReader = Box<dyn BufRead + Send>;

/// Opens a baseline file for streaming.
pub fn open(path: impl AsRef<Path>, compression: Compression) -> Result<CitationStream<DynReader>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = decompress(BufReader::with_capacity(1 << 16, file), compression).map_err(|e| Error::io(path, e))?;
    Ok(CitationStream::new(reader))
}

/// Wraps a byte stream in a gzip decoder when required.
pub fn decompress<R: BufRead + Send + 'static>(mut reader: R, compression: Compression) -> std::io::Result<DynReader> {
    let gzip = match compression {
        Compression::Gzip => true,
        Compression::Plain => false,
        Compression::Auto => reader.fill_buf()?.starts_with(&GZIP_MAGIC),
    };
    Ok(if gzip {
        Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(reader)))
    } else {
        Box::new(reader)
    })
}

/// `stream_citations` over an arbitrary byte source.
pub fn stream_citations<R: Read + Send + 'static>(
    source: R,
    compressed: bool,
) -> std::io::Result<CitationStream<DynReader>> {
    let reader = decompress(BufReader::new(source), Compression::from_flag(compressed))?;
    Ok(CitationStream::new(reader))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    MedlineCitation,
    Article,
    Pmid,
    ArticleTitle,
    Other,
}

impl Tag {
    fn from_name(name: &[u8]) -> Tag {
        match name {
            b"MedlineCitation" => Tag::MedlineCitation,
            b"Article" => Tag::Article,
            b"PMID" => Tag::Pmid,
            b"ArticleTitle" => Tag::ArticleTitle,
            _ => Tag::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Capture {
    None,
    Pmid,
    Title,
}

/// Lazy iterator of citations from one XML document.
///
/// Records missing a PMID or a title are counted in
/// [`CorpusStats::records_skipped_malformed`] and skipped. A document that is
/// not well-formed XML yields one `Err` and then ends.
pub struct CitationStream<R: BufRead> {
    xml: Reader<R>,
    buf: Vec<u8>,
    stats: CorpusStats,
    // element path below the current PubmedArticle
    path: Vec<Tag>,
    in_record: bool,
    depth: usize,
    pmid: String,
    pmid_seen: bool,
    title: String,
    done: bool,
    high_water: usize,
}

impl<R: BufRead> CitationStream<R> {
    pub fn new(reader: R) -> Self {
        let mut xml = Reader::from_reader(reader);
        let config = xml.config_mut();
        config.check_end_names = true;
        config.expand_empty_elements = false;
        CitationStream {
            xml,
            buf: Vec::with_capacity(4096),
            stats: CorpusStats {
                files_read: 1,
                ..CorpusStats::default()
            },
            path: Vec::new(),
            in_record: false,
            depth: 0,
            pmid: String::new(),
            pmid_seen: false,
            title: String::new(),
            done: false,
            high_water: 0,
        }
    }

    pub fn stats(&self) -> CorpusStats {
        self.stats
    }

    /// Largest number of bytes held for a single event or record field.
    pub fn buffer_high_water(&self) -> usize {
        self.high_water
    }

    fn capture(&self) -> Capture {
        use Tag::*;
        match self.path.as_slice() {
            [MedlineCitation, Pmid] if !self.pmid_seen => Capture::Pmid,
            [MedlineCitation, Article, ArticleTitle, ..] => Capture::Title,
            _ => Capture::None,
        }
    }

    fn push_text(&mut self, text: &str) {
        match self.capture() {
            Capture::Pmid => self.pmid.push_str(text),
            Capture::Title => self.title.push_str(text),
            Capture::None => {}
        }
    }

    fn finish_record(&mut self) -> Option<Citation> {
        self.in_record = false;
        self.stats.citations_scanned += 1;
        let pmid = self.pmid.trim();
        let title = collapse_whitespace(&self.title);
        self.high_water = self.high_water.max(self.title.len());
        let ok = !pmid.is_empty() && pmid.bytes().all(|b| b.is_ascii_digit()) && !title.is_empty();
        if ok {
            Some(Citation {
                pmid: pmid.to_string(),
                title,
            })
        } else {
            self.stats.records_skipped_malformed += 1;
            None
        }
    }

    fn xml_error(&self, message: impl Into<String>) -> Error {
        Error::Xml {
            offset: self.xml.error_position(),
            message: message.into(),
        }
    }

    fn step(&mut self) -> Result<Option<Option<Citation>>> {
        self.buf.clear();
        let event = match self.xml.read_event_into(&mut self.buf) {
            Ok(ev) => ev.into_owned(),
            Err(e) => return Err(self.xml_error(e.to_string())),
        };
        self.high_water = self.high_water.max(self.buf.len());
        match event {
            Event::Start(e) => {
                self.depth += 1;
                let name = e.local_name();
                if self.in_record {
                    self.path.push(Tag::from_name(name.into_inner().as_bytes()));
                } else if name.into_inner() == "PubmedArticle" {
                    self.in_record = true;
                    self.path.clear();
                    self.pmid.clear();
                    self.pmid_seen = false;
                    self.title.clear();
                }
            }
            Event::End(_) => {
                self.depth = self.depth.saturating_sub(1);
                if self.in_record {
                    match self.path.pop() {
                        Some(Tag::Pmid) if self.path == [Tag::MedlineCitation] => {
                            self.pmid_seen = true;
                        }
                        Some(_) => {}
                        None => return Ok(Some(self.finish_record())),
                    }
                }
            }
            Event::Text(t) => {
                if self.in_record {
                    let text = t.xml10_content().into_owned();
                    self.push_text(&text);
                }
            }
            Event::CData(c) => {
                if self.in_record {
                    let text = c.into_inner().into_owned();
                    self.push_text(&text);
                }
            }
            Event::GeneralRef(r) => {
                if self.in_record && self.capture() != Capture::None {
                    let resolved = match r.resolve_char_ref() {
                        Ok(Some(ch)) => ch.to_string(),
                        Ok(None) => match resolve_predefined_entity(&r) {
                            Some(s) => s.to_string(),
                            // undeclared entity: keep it verbatim
                            None => format!("&{};", &*r),
                        },
                        Err(e) => return Err(self.xml_error(e.to_string())),
                    };
                    self.push_text(&resolved);
                }
            }
            Event::Eof => {
                if self.depth > 0 || self.in_record {
                    return Err(self.xml_error("unexpected end of document"));
                }
                return Ok(None);
            }
            _ => {}
        }
        Ok(Some(None))
    }
}

impl<R: BufRead> Iterator for CitationStream<R> {
    type Item = Result<Citation>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match self.step() {
                Ok(Some(Some(citation))) => return Some(Ok(citation)),
                Ok(Some(None)) => {}
                Ok(None) => self.done = true,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}

impl<R: BufRead> std::iter::FusedIterator for CitationStream<R> {}
