"""User-aware prefix-tuning captioner (desk-scale reference implementation).

The heavy lifting lives in the compiled ``uapt._core`` extension; this
package just re-exports its surface. ``run()`` takes the same argument
vector as the ``uapt`` command-line tool and returns its exit code, so the
whole pipeline (synth / pretrain-lm / train / generate / eval / stats /
gradcheck) is scriptable from Python. The direct helpers return plain
dicts, lists, and tuples.
"""

from uapt._core import (
    __version__,
    bleu,
    cider_d,
    corpus_stats,
    evaluate,
    gradcheck,
    keyword_table,
    load_dataset,
    meteor_lite,
    normalize,
    rouge_l,
    run,
    synth,
)

__all__ = [
    "__version__",
    "bleu",
    "cider_d",
    "corpus_stats",
    "evaluate",
    "gradcheck",
    "keyword_table",
    "load_dataset",
    "meteor_lite",
    "normalize",
    "rouge_l",
    "run",
    "synth",
]
