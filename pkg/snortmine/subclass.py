from configparser import ConfigParser
from contextlib import contextmanager
import io
import logging
import os
import pandas as pd


@contextmanager
def open_text(target, mode="r"):
    """
    Yields a text stream for a path or an already open stream.
        - target (string, PathLike or stream): where to read from / write to
        - mode (string): "r" or "w"; paths are opened as UTF-8 with LF line endings
    Byte streams are wrapped so callers always see text.
    """
    if isinstance(target, (str, os.PathLike)):
        newline = "\n" if "w" in mode else None
        with open(target, mode, encoding="utf-8", newline=newline) as f:
            yield f
    elif isinstance(target, (io.RawIOBase, io.BufferedIOBase)):
        wrapper = io.TextIOWrapper(target, encoding="utf-8", newline="\n" if "w" in mode else None)
        try:
            yield wrapper
        finally:
            wrapper.flush()
            wrapper.detach()
    else:
        yield target


class Subclass(object):
    def __init__(self, verbose=0, config_path=None):
        super().__init__()
        self.verbose = verbose
        self.logger = logging.getLogger(self.__class__.__module__)
        self.parser = ConfigParser()
        if config_path:
            self.parser.read(config_path, encoding="utf-8")

    def get_parameter_value(self, parameter_name, default=None):
        """
        Looks up a parameter by path, e.g. "/pipeline/min_sup"
            - parameter_name (string): "/section/key" path into the config file
            - default: returned when the section or key is missing
        """
        section, _, key = parameter_name.strip("/").partition("/")
        if not self.parser.has_option(section, key):
            return default
        return self.parser.get(section, key)

    def vprint(self, obj):
        if self.verbose:
            self.logger.info(obj)
        else:
            self.logger.debug(obj)

    def _to_df(self, rows, columns=None):
        """
        Builds a DataFrame from a list of dicts or tuples, keeping the column order given.
        """
        df = pd.DataFrame(rows, columns=columns)
        if columns:
            df = df[list(columns)]
        return df
