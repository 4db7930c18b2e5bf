import io
import os
import tempfile
import unittest

from snortmine.errors import EXIT_CONFIG, EXIT_PARSE, ConfigError, ParseError, UnknownLabelError
from snortmine.subclass import Subclass, open_text


class TestSubclass(unittest.TestCase):
    def test_can_call_module(self):
        Subclass()

    def test_parser_exists(self):
        self.assertTrue(Subclass().parser is not None)

    def test_get_parameter_value(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "snortmine.ini")
            with open(path, "w") as f:
                f.write("[pipeline]\nmin_sup = 5\n")
            sub = Subclass(config_path=path)
            self.assertEqual(sub.get_parameter_value("/pipeline/min_sup"), "5")
            self.assertIsNone(sub.get_parameter_value("/pipeline/min_conf"))
            self.assertEqual(sub.get_parameter_value("/other/key", "x"), "x")

    def test_to_df_keeps_column_order(self):
        df = Subclass()._to_df([{"b": 1, "a": 2}], ["a", "b"])
        self.assertEqual(list(df.columns), ["a", "b"])

    def test_open_text_wraps_byte_streams(self):
        with open_text(io.BytesIO("a∈b\n".encode("utf-8"))) as f:
            self.assertEqual(f.read(), "a∈b\n")


class TestErrors(unittest.TestCase):
    def test_parse_error_carries_line(self):
        e = ParseError("bad field", line=7)
        self.assertEqual(e.line, 7)
        self.assertEqual(str(e), "line 7: bad field")
        self.assertEqual(e.exit_code, EXIT_PARSE)

    def test_exit_codes(self):
        self.assertEqual(ConfigError("x").exit_code, EXIT_CONFIG)
        self.assertEqual(UnknownLabelError("x").exit_code, EXIT_PARSE)


if __name__ == "__main__":
    unittest.main()
