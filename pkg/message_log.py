"""Ordered in-process message queue between protocol entities.

Every message is appended with a sequence number and copied verbatim into
the transcript. No timestamps or random identifiers are recorded.
"""
from monitoring import monitoring

MESSAGE_KINDS = (
    "key_distribution", "history_bootstrap", "user_query", "query_relay",
    "poi_ciphertexts", "virtual_location", "compare_w", "dgk_bits", "dgk_blinded",
    "leaked_z", "masked_z", "decision", "query_response", "response_relay",
)


class MessageLog:
    def __init__(self):
        self.messages = []

    def log_message(self, kind, sender, receiver, details=None):
        """Append one message and return its record"""
        if kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind '{kind}'")
        record = {
            "seq": len(self.messages),
            "kind": kind,
            "sender": sender,
            "receiver": receiver,
            "details": details or {}
        }
        self.messages.append(record)
        monitoring.logger.debug(f"Message {record['seq']}: {kind} {sender} -> {receiver}")
        return record

    def get_trail(self, sender=None, receiver=None, kind=None):
        """Messages matching every given filter, in send order"""
        return [
            msg for msg in self.messages
            if (sender is None or msg["sender"] == sender)
            and (receiver is None or msg["receiver"] == receiver)
            and (kind is None or msg["kind"] == kind)
        ]

    def count(self, kind=None):
        return len(self.get_trail(kind=kind))

    def to_list(self):
        return list(self.messages)

    def __len__(self):
        return len(self.messages)
