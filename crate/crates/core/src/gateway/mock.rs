use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{BackendError, CompletionBackend, CompletionRequest, GatewayError};

/// Stable key for a prompt: lowercase hex SHA-256 of its UTF-8 bytes.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays canned completions keyed by [`prompt_hash`].
///
/// A redraw (`sample = k > 0`) first looks up `"<hash>#<k>"` and falls back
/// to `"<hash>"`. Unknown prompts fail with a mock-miss error and are
/// remembered so a transcript can be filled in afterwards.
#[derive(Debug, Default)]
pub struct MockBackend {
    id: String,
    transcript: BTreeMap<String, String>,
    misses: Mutex<BTreeMap<String, String>>,
}

impl MockBackend {
    pub fn new(transcript: BTreeMap<String, String>) -> Self {
        Self {
            id: "mock".into(),
            transcript,
            misses: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read mock transcript {}: {e}", path.display())))?;
        let transcript: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("mock transcript {} is not a JSON object of strings: {e}", path.display())))?;
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        Ok(Self {
            id: format!("mock:{name}"),
            ..Self::new(transcript)
        })
    }

    pub fn insert(&mut self, prompt: &str, text: &str) {
        self.transcript.insert(prompt_hash(prompt), text.to_string());
    }

    pub fn insert_sample(&mut self, prompt: &str, sample: u32, text: &str) {
        self.transcript
            .insert(format!("{}#{sample}", prompt_hash(prompt)), text.to_string());
    }

    pub fn transcript(&self) -> &BTreeMap<String, String> {
        &self.transcript
    }

    /// Prompts that had no transcript entry, keyed by hash.
    pub fn misses(&self) -> BTreeMap<String, String> {
        self.misses.lock().expect("miss lock").clone()
    }
}

impl CompletionBackend for MockBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn generate(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let hash = prompt_hash(&req.prompt);
        let redraw = (req.sample > 0)
            .then(|| self.transcript.get(&format!("{hash}#{}", req.sample)))
            .flatten();
        match redraw.or_else(|| self.transcript.get(&hash)) {
            Some(text) => Ok(text.clone()),
            None => {
                self.misses
                    .lock()
                    .expect("miss lock")
                    .insert(hash.clone(), req.prompt.clone());
                Err(BackendError::MockMiss(hash))
            }
        }
    }
}
