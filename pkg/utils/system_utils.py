import hashlib
import logging
import time
from errno import EEXIST
from os import makedirs, path


def mkdir_p(folder_path):
    # Creates a directory. equivalent to using mkdir -p on the command line
    try:
        makedirs(folder_path)
    except OSError as exc:
        if exc.errno == EEXIST and path.isdir(folder_path):
            pass
        else:
            raise


def sha256_text(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Timing:
    """
    Timing environment
    usage:
    with Timing("message"):
        your commands here
    will log the wall-clock time in seconds
    """

    def __init__(self, name):
        self.name = name
        self.elapsed = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, type, value, traceback):
        self.elapsed = time.perf_counter() - self.start
        logging.info("{} elapsed {:.2f} s".format(self.name, self.elapsed))
