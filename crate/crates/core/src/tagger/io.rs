use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{TaggerParams, TENSOR_NAMES};
use super::vocab::Vocab;
use super::{TaggerConfig, TaggerModel};
use crate::container::{Reader, Writer};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"XLNERBLC";

pub fn write_model<W: Write>(model: &TaggerModel, out: W) -> Result<()> {
    let mut w = Writer::new(out, MODEL_MAGIC)?;
    w.str(&serde_json::to_string(&model.config)?)?;
    w.strings(&model.vocab.words()[1..])?;
    w.strings(&model.vocab.chars()[1..])?;
    let shapes = model.params.shapes();
    for ((name, shape), data) in TENSOR_NAMES.iter().zip(&shapes).zip(model.params.tensors()) {
        w.tensor(name, shape, data)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<TaggerModel> {
    let mut r = Reader::new(input, MODEL_MAGIC)?;
    let config: TaggerConfig = serde_json::from_str(&r.str()?)?;
    config.validate()?;
    let words = r.strings()?;
    let chars = r
        .strings()?
        .into_iter()
        .map(|s| {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(Error::Format(format!(
                    "character entry {s:?} is not one character"
                ))),
            }
        })
        .collect::<Result<Vec<char>>>()?;
    let vocab = Vocab::from_parts(words, chars);
    let mut params = TaggerParams::zeros(&config, vocab.word_count(), vocab.char_count());
    let shapes = params.shapes();
    for ((name, shape), slot) in TENSOR_NAMES.iter().zip(&shapes).zip(params.tensors_mut()) {
        slot.copy_from_slice(&r.tensor(name, shape)?);
    }
    if !params.all_finite() {
        return Err(Error::NonFinite(
            "model file contains non-finite weights".into(),
        ));
    }
    Ok(TaggerModel {
        config,
        vocab,
        params,
    })
}

pub fn save_model(model: &TaggerModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(model, BufWriter::new(file))
}

pub fn load_model(path: &Path) -> Result<TaggerModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}
