/**
 * Minimal unpickler for serialized checkpoint payloads (pickle protocol 2,
 * plus the protocol 4/5 framing and memo opcodes newer writers emit).
 *
 * Only the object graph a saved state dict needs is supported: containers,
 * scalars, strings, globals used as symbols, tensor-rebuild calls and
 * persistent storage references.  Anything else raises with the opcode
 * name so failures are diagnosable.
 */

export interface GlobalRef {
  global: string; // "module.name"
}

export interface StorageRef {
  kind: "storage";
  dtype: string;     // f32 | f64 | i64 | i32 | i16 | u8 | i8 | b8 | f16 | bf16
  elementBytes: number;
  key: string;
  numel: number;
  location: string;
}

export interface TensorMeta {
  kind: "tensor";
  storage: StorageRef;
  storageOffset: number;
  shape: number[];
  stride: number[];
  requiresGrad: boolean;
}

const STORAGE_DTYPES: Record<string, [string, number]> = {
  FloatStorage: ["f32", 4],
  DoubleStorage: ["f64", 8],
  HalfStorage: ["f16", 2],
  BFloat16Storage: ["bf16", 2],
  LongStorage: ["i64", 8],
  IntStorage: ["i32", 4],
  ShortStorage: ["i16", 2],
  CharStorage: ["i8", 1],
  ByteStorage: ["u8", 1],
  BoolStorage: ["b8", 1],
};

function isGlobal(v: unknown, name?: string): v is GlobalRef {
  return (
    typeof v === "object" && v !== null && "global" in v &&
    (name === undefined || (v as GlobalRef).global === name)
  );
}

export class Unpickler {
  private pos = 0;
  private stack: unknown[] = [];
  private marks: number[] = [];
  private memo: unknown[] = [];

  constructor(private buf: Buffer) {}

  private u8(): number { return this.buf.readUInt8(this.pos++); }
  private u16(): number { const v = this.buf.readUInt16LE(this.pos); this.pos += 2; return v; }
  private i32(): number { const v = this.buf.readInt32LE(this.pos); this.pos += 4; return v; }
  private u32(): number { const v = this.buf.readUInt32LE(this.pos); this.pos += 4; return v; }
  private bytes(n: number): Buffer { const v = this.buf.subarray(this.pos, this.pos + n); this.pos += n; return v; }
  private line(): string {
    const nl = this.buf.indexOf(0x0a, this.pos);
    if (nl < 0) throw new Error("unterminated pickle line");
    const s = this.buf.subarray(this.pos, nl).toString("latin1");
    this.pos = nl + 1;
    return s;
  }

  private popMark(): unknown[] {
    const mark = this.marks.pop();
    if (mark === undefined) throw new Error("pickle stack underflow (no mark)");
    return this.stack.splice(mark);
  }

  private persistentLoad(pid: unknown): StorageRef {
    if (!Array.isArray(pid) || pid[0] !== "storage") {
      throw new Error(`unsupported persistent id ${JSON.stringify(pid)}`);
    }
    const [, typeRef, key, location, numel] = pid as
      [string, GlobalRef, string, string, number];
    const short = typeRef.global.split(".").pop() ?? "";
    const dt = STORAGE_DTYPES[short];
    if (!dt) throw new Error(`unknown storage type ${typeRef.global}`);
    return { kind: "storage", dtype: dt[0], elementBytes: dt[1], key, numel, location };
  }

  private reduce(callable: unknown, args: unknown[]): unknown {
    if (isGlobal(callable, "torch._utils._rebuild_tensor_v2") ||
        isGlobal(callable, "torch._utils._rebuild_tensor")) {
      const [storage, storageOffset, size, stride, requiresGrad] = args as
        [StorageRef, number, number[], number[], boolean];
      return {
        kind: "tensor", storage, storageOffset,
        shape: [...(size ?? [])], stride: [...(stride ?? [])],
        requiresGrad: !!requiresGrad,
      } satisfies TensorMeta;
    }
    if (isGlobal(callable, "torch._utils._rebuild_parameter")) {
      return args[0]; // unwrap to the inner tensor
    }
    if (isGlobal(callable, "collections.OrderedDict")) {
      const m = new Map<unknown, unknown>();
      if (args.length === 1 && Array.isArray(args[0])) {
        for (const pair of args[0] as [unknown, unknown][]) m.set(pair[0], pair[1]);
      }
      return m;
    }
    if (isGlobal(callable, "torch.serialization._get_restore_location") ||
        isGlobal(callable, "torch.device")) {
      return { global: "torch.device", args };
    }
    const name = isGlobal(callable) ? callable.global : String(callable);
    throw new Error(`unsupported reduce callable ${name}`);
  }

  load(): unknown {
    for (;;) {
      const op = this.u8();
      switch (op) {
        case 0x80: this.u8(); break;                       // PROTO
        case 0x95: this.pos += 8; break;                   // FRAME
        case 0x2e: return this.stack.pop();                // STOP
        case 0x4e: this.stack.push(null); break;           // NONE
        case 0x88: this.stack.push(true); break;           // NEWTRUE
        case 0x89: this.stack.push(false); break;          // NEWFALSE
        case 0x4a: this.stack.push(this.i32()); break;     // BININT
        case 0x4b: this.stack.push(this.u8()); break;      // BININT1
        case 0x4d: this.stack.push(this.u16()); break;     // BININT2
        case 0x8a: {                                       // LONG1
          const n = this.u8();
          const raw = this.bytes(n);
          let v = 0n;
          for (let i = n - 1; i >= 0; i--) v = (v << 8n) | BigInt(raw[i]);
          if (n > 0 && raw[n - 1] & 0x80) v -= 1n << BigInt(8 * n);
          this.stack.push(v <= BigInt(Number.MAX_SAFE_INTEGER) ? Number(v) : v);
          break;
        }
        case 0x47: {                                       // BINFLOAT (big-endian)
          this.stack.push(this.buf.readDoubleBE(this.pos));
          this.pos += 8;
          break;
        }
        case 0x55: this.stack.push(this.bytes(this.u8()).toString("latin1")); break;   // SHORT_BINSTRING
        case 0x54: this.stack.push(this.bytes(this.u32()).toString("latin1")); break;  // BINSTRING
        case 0x58: this.stack.push(this.bytes(this.u32()).toString("utf-8")); break;   // BINUNICODE
        case 0x8c: this.stack.push(this.bytes(this.u8()).toString("utf-8")); break;    // SHORT_BINUNICODE
        case 0x42: this.stack.push(this.bytes(this.u32())); break;                     // BINBYTES
        case 0x43: this.stack.push(this.bytes(this.u8())); break;                      // SHORT_BINBYTES
        case 0x5d: this.stack.push([]); break;             // EMPTY_LIST
        case 0x7d: this.stack.push(new Map()); break;      // EMPTY_DICT
        case 0x29: this.stack.push([]); break;             // EMPTY_TUPLE
        case 0x28: this.marks.push(this.stack.length); break; // MARK
        case 0x74: this.stack.push(this.popMark()); break; // TUPLE
        case 0x85: this.stack.push(this.stack.splice(-1)); break;  // TUPLE1
        case 0x86: this.stack.push(this.stack.splice(-2)); break;  // TUPLE2
        case 0x87: this.stack.push(this.stack.splice(-3)); break;  // TUPLE3
        case 0x61: {                                       // APPEND
          const v = this.stack.pop();
          (this.stack[this.stack.length - 1] as unknown[]).push(v);
          break;
        }
        case 0x65: {                                       // APPENDS
          const items = this.popMark();
          (this.stack[this.stack.length - 1] as unknown[]).push(...items);
          break;
        }
        case 0x73: {                                       // SETITEM
          const v = this.stack.pop();
          const k = this.stack.pop();
          (this.stack[this.stack.length - 1] as Map<unknown, unknown>).set(k, v);
          break;
        }
        case 0x75: {                                       // SETITEMS
          const items = this.popMark();
          const m = this.stack[this.stack.length - 1] as Map<unknown, unknown>;
          for (let i = 0; i < items.length; i += 2) m.set(items[i], items[i + 1]);
          break;
        }
        case 0x71: this.memo[this.u8()] = this.stack[this.stack.length - 1]; break;   // BINPUT
        case 0x72: this.memo[this.u32()] = this.stack[this.stack.length - 1]; break;  // LONG_BINPUT
        case 0x94: this.memo.push(this.stack[this.stack.length - 1]); break;          // MEMOIZE
        case 0x68: this.stack.push(this.memo[this.u8()]); break;                      // BINGET
        case 0x6a: this.stack.push(this.memo[this.u32()]); break;                     // LONG_BINGET
        case 0x63: {                                       // GLOBAL
          const module = this.line();
          const name = this.line();
          this.stack.push({ global: `${module}.${name}` });
          break;
        }
        case 0x93: {                                       // STACK_GLOBAL
          const name = this.stack.pop();
          const module = this.stack.pop();
          this.stack.push({ global: `${module}.${name}` });
          break;
        }
        case 0x52: {                                       // REDUCE
          const args = this.stack.pop() as unknown[];
          const callable = this.stack.pop();
          this.stack.push(this.reduce(callable, args));
          break;
        }
        case 0x81: {                                       // NEWOBJ
          const args = this.stack.pop() as unknown[];
          const cls = this.stack.pop();
          this.stack.push(this.reduce(cls, args));
          break;
        }
        case 0x62: {                                       // BUILD
          const state = this.stack.pop();
          const obj = this.stack[this.stack.length - 1];
          if (obj instanceof Map && state instanceof Map) {
            for (const [k, v] of state) obj.set(k, v);
          } else if (state !== null) {
            throw new Error("BUILD on unsupported object");
          }
          break;
        }
        case 0x51: {                                       // BINPERSID
          const pid = this.stack.pop();
          this.stack.push(this.persistentLoad(pid));
          break;
        }
        default:
          throw new Error(
            `unsupported pickle opcode 0x${op.toString(16)} at ${this.pos - 1}`);
      }
    }
  }
}

export function unpickle(buf: Buffer): unknown {
  return new Unpickler(buf).load();
}
