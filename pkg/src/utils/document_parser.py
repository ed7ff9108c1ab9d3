#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Document Parser
Loads the JSON documents netchemo consumes (network descriptions and run
configurations).
"""

import json
from typing import Any, Dict


class DocumentParser:
    """Parser for netchemo JSON documents."""

    def __init__(self, required_keys=()):
        """
        Initialize the document parser.

        Args:
            required_keys: top-level keys every document must carry
        """
        self.required_keys = tuple(required_keys)

    def parse(self, document_string: str) -> Dict[str, Any]:
        """
        Parse a document string into a dictionary.

        Args:
            document_string (str): The JSON text to parse

        Returns:
            dict: The parsed document

        Raises:
            ValueError: If the document is not valid JSON or misses a key
        """
        try:
            document = json.loads(document_string)
        except json.JSONDecodeError as e:
            raise ValueError(f"Invalid JSON format: {str(e)}")

        if not isinstance(document, dict):
            raise ValueError("Document must be a JSON object")

        for key in self.required_keys:
            if key not in document:
                raise ValueError(f"Document must have a '{key}' field")

        return document
