"""Exception hierarchy.

Every error raised on purpose derives from :class:`CanopyError` and carries an
``exit_class`` the CLI maps to a process exit code.
"""

CONFIG = "config"
PARSE = "parse"
STORE = "store"
RUN = "run"


class CanopyError(Exception):
    exit_class = RUN


# --- container parsing -------------------------------------------------------

class TiffError(CanopyError):
    exit_class = PARSE


class BadMagic(TiffError):
    pass


class TruncatedHeader(TiffError):
    pass


class CyclicDirectoryChain(TiffError):
    pass


class PageOutOfRange(TiffError, IndexError):
    pass


class BandOutOfRange(PageOutOfRange):
    pass


class UnsupportedCompression(TiffError):
    pass


class UnsupportedPlanarConfig(TiffError):
    pass


class UnsupportedSampleFormat(TiffError):
    pass


class MissingTag(TiffError):
    pass


class CorruptSegment(TiffError):
    pass


class SegmentOutOfFile(TiffError):
    pass


class WindowOutOfBounds(TiffError, ValueError):
    pass


# --- tiling / segmentation / metrics ----------------------------------------

class ZeroDimension(CanopyError, ValueError):
    exit_class = CONFIG


class MaskMissing(CanopyError):
    exit_class = STORE


class MaskShapeMismatch(CanopyError):
    exit_class = STORE


class MalformedLine(CanopyError):
    exit_class = PARSE

    def __init__(self, line_number, line=""):
        self.line_number = line_number
        self.line = line
        super().__init__(f"malformed detection line {line_number}: {line!r}")


class RefMismatch(CanopyError, ValueError):
    pass


class EmptyInput(CanopyError, ValueError):
    pass


class MissingScale(CanopyError):
    pass


# --- store / cli ------------------------------------------------------------

class IoFailure(CanopyError):
    exit_class = STORE


class CorruptManifest(CanopyError):
    exit_class = STORE


class MissingRun(CanopyError):
    exit_class = CONFIG


class ConfigError(CanopyError):
    exit_class = CONFIG
