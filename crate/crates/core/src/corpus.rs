//! Labeled text corpora stored one class per directory.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    /// `class/filename` for corpora loaded from disk.
    pub id: String,
    pub text: String,
    /// Index into [`LabeledCorpus::classes`].
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub name: String,
    pub classes: Vec<String>,
    pub documents: Vec<Document>,
}

impl LabeledCorpus {
    /// Checks that ids are unique, labels are in range and the corpus is
    /// non-empty.
    pub fn new(name: impl Into<String>, classes: Vec<String>, documents: Vec<Document>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut ids: Vec<&str> = documents.iter().map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate document id {}", w[0])));
        }
        if let Some(d) = documents.iter().find(|d| d.label >= classes.len()) {
            return Err(Error::invalid(format!(
                "document {} has label {} but only {} classes",
                d.id,
                d.label,
                classes.len()
            )));
        }
        Ok(LabeledCorpus {
            name: name.into(),
            classes,
            documents,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.documents.iter().map(|d| d.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for d in &self.documents {
            counts[d.label] += 1;
        }
        counts
    }

    /// Documents at `indices`, in the given order, sharing this corpus's
    /// class list. An empty selection yields an empty corpus.
    pub fn subset(&self, indices: &[usize]) -> LabeledCorpus {
        LabeledCorpus {
            name: self.name.clone(),
            classes: self.classes.clone(),
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
        }
    }

    /// Write in the class-per-directory layout read by [`load_corpus`].
    /// The part of each id after the last `/` becomes the filename.
    pub fn write_to_dir(&self, root: &Path) -> Result<()> {
        for class in &self.classes {
            fs::create_dir_all(root.join(class))?;
        }
        for doc in &self.documents {
            let file = doc.id.rsplit('/').next().unwrap_or(&doc.id);
            fs::write(root.join(&self.classes[doc.label]).join(file), &doc.text)?;
        }
        Ok(())
    }
}

/// Load a corpus where each subdirectory of `root` is a class and each
/// regular file inside it is one document.
///
/// Classes are sorted by directory name and documents by filename. Files that
/// cannot be read are skipped with a warning; invalid UTF-8 is replaced.
pub fn load_corpus(root: &Path) -> Result<LabeledCorpus> {
    let corpus_err = |reason: String| Error::Corpus {
        path: root.to_path_buf(),
        reason,
    };
    let entries = fs::read_dir(root).map_err(|e| corpus_err(format!("cannot read directory: {e}")))?;

    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || !entry.file_type()?.is_dir() {
            continue;
        }
        class_dirs.push((name, entry.path()));
    }
    class_dirs.sort();

    let mut classes = Vec::new();
    let mut documents = Vec::new();
    for (class_name, dir) in class_dirs {
        let mut files: Vec<(String, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') {
                continue;
            }
            match entry.file_type() {
                Ok(t) if t.is_file() => files.push((name, entry.path())),
                _ => {}
            }
        }
        files.sort();
        if files.is_empty() {
            warn!("class directory {} holds no documents; skipped", dir.display());
            continue;
        }
        let label = classes.len();
        for (file_name, path) in files {
            match fs::read(&path) {
                Ok(bytes) => documents.push(Document {
                    id: format!("{class_name}/{file_name}"),
                    text: String::from_utf8_lossy(&bytes).into_owned(),
                    label,
                }),
                Err(e) => warn!("skipping unreadable file {}: {e}", path.display()),
            }
        }
        classes.push(class_name);
    }

    if classes.len() < 2 {
        return Err(corpus_err(format!(
            "need at least 2 class directories, found {}",
            classes.len()
        )));
    }
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    LabeledCorpus::new(name, classes, documents)
}
