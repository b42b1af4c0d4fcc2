#pragma once

#include <vector>

#include "mpa/io/manifest.hpp"
#include "mpa/parallel.hpp"
#include "mpa/text/lexicon.hpp"
#include "mpa/text/vocab.hpp"
#include "mpa/train/trainer.hpp"

namespace mpa::io {

// Reads each entry's WAV, resamples to 16 kHz and extracts log-mel
// features; the transcript is encoded with `vocab`. A word-level entry is
// phonemized through `lexicon` when `vocab` is phoneme-level (only for
// unlabeled entries, since word ratings cannot be mapped onto phonemes).
// Throws InvalidInput for any other level mismatch.
std::vector<train::Example> load_examples(const std::vector<ManifestEntry>& entries,
                                          const text::Vocabulary& vocab,
                                          const text::Lexicon* lexicon = nullptr,
                                          Exec exec = Exec::Parallel);

// Transcript tokens of one entry in `vocab`'s level.
text::TokenSequence entry_tokens(const ManifestEntry& entry, const text::Vocabulary& vocab,
                                 const text::Lexicon* lexicon);

}  // namespace mpa::io
