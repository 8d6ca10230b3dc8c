"""Built-in stopword lists: standard English plus basic color names.

Domain-specific terms are intentionally not built in; supply them through
stopword files (one token per line, `#` comments).
"""

from __future__ import annotations

from pathlib import Path

ENGLISH = frozenset("""
a about above after again against all am an and any are aren arent as at be
because been before being below between both but by can cannot could couldnt
did didn didnt do does doesn doesnt doing don dont down during each few for
from further had hadn hadnt has hasn hasnt have haven havent having he her
here hers herself him himself his how i if in into is isn isnt it its itself
just me more most mustn mustnt my myself no nor not now of off on once only
or other our ours ourselves out over own same shan shant she should shouldn
shouldnt so some such than that the their theirs them themselves then there
these they this those through to too under until up very was wasn wasnt we
were weren werent what when where which while who whom why will with won
wont would wouldn wouldnt you your yours yourself yourselves
""".split())

# CSS basic color keywords; visual descriptors add no semantic signal here
COLORS = frozenset([
    "aqua", "black", "blue", "fuchsia", "gray", "green", "lime", "maroon",
    "navy", "olive", "purple", "red", "silver", "teal", "white", "yellow",
])


def load_stopword_file(path: Path) -> set[str]:
    """One token per line; blank lines and `#` comments ignored."""
    words: set[str] = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        token = line.split("#", 1)[0].strip().lower()
        if token:
            words.add(token)
    return words


def combined_stopwords(files: list[Path] | tuple[Path, ...] = ()) -> frozenset[str]:
    words = set(ENGLISH) | set(COLORS)
    for path in files:
        words |= load_stopword_file(path)
    return frozenset(words)
