"""Generate a corpus, train a small model, and score it with beam search.

Takes a couple of minutes on a laptop CPU.
Run: python demos/03_train_and_evaluate.py
"""

import numpy as np

from pointerparse import (
    BeamConfig,
    ModelConfig,
    TrainConfig,
    beam_search,
    default_grammar,
    evaluate,
    generate_synthetic,
    linearize,
    prepare_corpus,
    train_loop,
)

splits = generate_synthetic(default_grammar(), count=400, seed=42)
print({k: len(v) for k, v in splits.items()})

symtab, source_vocab = prepare_corpus(splits["train"])
print(f"|V| = {symtab.vocab_size} parse symbols + {symtab.max_src_len} pointer ids")

model_config = ModelConfig(
    vocab_size=symtab.vocab_size,
    src_vocab_size=source_vocab.size,
    max_src_len=symtab.max_src_len,
    d_model=96,
    n_enc_layers=2,
    n_enc_heads=4,
    enc_ffn=192,
    d_dec=96,
    n_dec_layers=2,
    n_dec_heads=4,
    dec_ffn=192,
    dropout=0.1,
)
train_config = TrainConfig(
    batch_size=32,
    max_steps=2000,
    warmup_steps=400,
    eval_every=200,
    log_every=200,
    seed=1,
    early_stop_dev_em=0.98,
)
result = train_loop(
    splits["train"], splits["dev"], model_config, train_config, symtab, source_vocab,
    quiet=False,
)

# Final scoring on the held-out test split with beam size 4.
predictions, references, lengths, styles = [], [], [], []
for ex in splits["test"]:
    src = np.asarray(source_vocab.encode(ex.query.tokens), dtype=np.int64)
    best = beam_search(result.model, src, BeamConfig(beam_size=4))[0]
    predictions.append(symtab.decode(best.ids))
    references.append(linearize(ex.parse, ex.query))
    lengths.append(len(ex.query.tokens))
    styles.append(ex.style)
report = evaluate(predictions, references, lengths, styles)
print("\ntest split:", report.to_json())

misses = [r for r in report.records if not r.exact]
for record in misses[:3]:
    ex = splits["test"][record.index]
    print("\nmiss:", ex.query.raw)
    print("  gold:", references[record.index].to_string())
    print("  pred:", predictions[record.index].to_string())
    print("  first divergence at symbol", record.first_divergence)
